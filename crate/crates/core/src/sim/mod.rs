//! Discrete gridworld: agent model, visibility, episode lifecycle.
//!
//! Cells are 0.5 m apart. Cell `(cx, cz)` sits at `x = 0.5·cx`, `z = 0.5·cz`.
//! Yaw 0 faces +z and yaw grows clockwise when seen from above, so yaw 90
//! faces +x. Negative pitch looks down.

mod generate;
mod io;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use generate::{generate_scene, LayoutTable, SceneSize, ZoneTemplate};
pub use io::{load_scene, load_scene_dir, parse_scene, save_scene, write_scene};

pub const GRID_STEP: f64 = 0.5;
pub const YAW_STEP: i32 = 45;
pub const PITCH_STEP: i32 = 30;
pub const VISIBILITY_RANGE: f64 = 1.5;
pub const HALF_FOV_DEG: f64 = 45.0;
pub const DEFAULT_T_MAX: usize = 100;

const GEOM_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoomCategory {
    LivingRoom,
    Kitchen,
    Bedroom,
    Bathroom,
}

impl RoomCategory {
    pub const ALL: [RoomCategory; 4] = [
        RoomCategory::LivingRoom,
        RoomCategory::Kitchen,
        RoomCategory::Bedroom,
        RoomCategory::Bathroom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoomCategory::LivingRoom => "living_room",
            RoomCategory::Kitchen => "kitchen",
            RoomCategory::Bedroom => "bedroom",
            RoomCategory::Bathroom => "bathroom",
        }
    }
}

impl fmt::Display for RoomCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoomCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RoomCategory::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown room category `{s}`")))
    }
}

/// Vertical placement of an object; decides which pitch sees it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeightBand {
    Low,
    Mid,
    High,
}

impl HeightBand {
    pub fn as_str(self) -> &'static str {
        match self {
            HeightBand::Low => "low",
            HeightBand::Mid => "mid",
            HeightBand::High => "high",
        }
    }

    /// The one pitch angle at which this band is in view.
    pub fn pitch(self) -> i32 {
        match self {
            HeightBand::Low => -PITCH_STEP,
            HeightBand::Mid => 0,
            HeightBand::High => PITCH_STEP,
        }
    }
}

impl FromStr for HeightBand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(HeightBand::Low),
            "mid" => Ok(HeightBand::Mid),
            "high" => Ok(HeightBand::High),
            _ => Err(Error::Usage(format!("unknown height band `{s}`"))),
        }
    }
}

/// Agent pose on the grid. Invariants hold by construction: cells are
/// integers, yaw is a multiple of 45 in `[0, 360)`, pitch is one of
/// `-30, 0, 30`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    cx: usize,
    cz: usize,
    yaw: i32,
    pitch: i32,
}

impl Pose {
    pub fn new(cx: usize, cz: usize, yaw: i32, pitch: i32) -> Result<Self> {
        if yaw.rem_euclid(YAW_STEP) != 0 {
            return Err(Error::Usage(format!(
                "yaw {yaw} is not a multiple of {YAW_STEP}"
            )));
        }
        if ![-PITCH_STEP, 0, PITCH_STEP].contains(&pitch) {
            return Err(Error::Usage(format!(
                "pitch {pitch} outside {{-30, 0, 30}}"
            )));
        }
        Ok(Pose {
            cx,
            cz,
            yaw: yaw.rem_euclid(360),
            pitch,
        })
    }

    pub fn cell(&self) -> (usize, usize) {
        (self.cx, self.cz)
    }

    pub fn x(&self) -> f64 {
        self.cx as f64 * GRID_STEP
    }

    pub fn z(&self) -> f64 {
        self.cz as f64 * GRID_STEP
    }

    pub fn yaw(&self) -> i32 {
        self.yaw
    }

    pub fn pitch(&self) -> i32 {
        self.pitch
    }

    /// All 8 × 3 orientations at one cell, yaw-major.
    pub fn views_at(cx: usize, cz: usize) -> impl Iterator<Item = Pose> {
        (0..8).flat_map(move |y| {
            [-PITCH_STEP, 0, PITCH_STEP].into_iter().map(move |p| Pose {
                cx,
                cz,
                yaw: y * YAW_STEP,
                pitch: p,
            })
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub category: String,
    pub cx: usize,
    pub cz: usize,
    pub band: HeightBand,
}

impl ObjectInstance {
    pub fn x(&self) -> f64 {
        self.cx as f64 * GRID_STEP
    }

    pub fn z(&self) -> f64 {
        self.cz as f64 * GRID_STEP
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub room: RoomCategory,
    pub width: usize,
    pub depth: usize,
    /// Row-major over `z`: index `cz * width + cx`.
    pub reachable: Vec<bool>,
    pub objects: Vec<ObjectInstance>,
    pub seed: u64,
}

impl Scene {
    pub fn index(&self, cx: usize, cz: usize) -> usize {
        cz * self.width + cx
    }

    pub fn is_reachable(&self, cx: i64, cz: i64) -> bool {
        cx >= 0
            && cz >= 0
            && (cx as usize) < self.width
            && (cz as usize) < self.depth
            && self.reachable[self.index(cx as usize, cz as usize)]
    }

    pub fn reachable_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.depth).flat_map(move |cz| {
            (0..self.width)
                .filter_map(move |cx| self.reachable[self.index(cx, cz)].then_some((cx, cz)))
        })
    }

    pub fn contains_category(&self, category: &str) -> bool {
        self.objects.iter().any(|o| o.category == category)
    }

    /// Distinct goal categories present, sorted.
    pub fn goal_categories(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .objects
            .iter()
            .filter(|o| crate::categories::is_goal_category(&o.category))
            .map(|o| o.category.clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Checks the structural invariants every valid scene satisfies.
    pub fn validate(&self) -> Result<()> {
        if self.reachable.len() != self.width * self.depth {
            return Err(Error::Generation(format!(
                "reachability bitmap has {} cells, expected {}",
                self.reachable.len(),
                self.width * self.depth
            )));
        }
        if self.goal_categories().len() < 4 {
            return Err(Error::Generation(format!(
                "scene `{}` has fewer than 4 goal categories",
                self.id
            )));
        }
        for o in &self.objects {
            if o.category.is_empty() {
                return Err(Error::Generation("empty object category".into()));
            }
            if o.cx >= self.width || o.cz >= self.depth {
                return Err(Error::Generation(format!(
                    "object {} outside the grid",
                    o.category
                )));
            }
            let adjacent = NEIGHBORS4
                .iter()
                .any(|(dx, dz)| self.is_reachable(o.cx as i64 + dx, o.cz as i64 + dz));
            if !adjacent {
                return Err(Error::Generation(format!(
                    "object {} at ({}, {}) has no reachable neighbour",
                    o.category, o.cx, o.cz
                )));
            }
        }
        if !self.reachable_is_connected() {
            return Err(Error::Generation(
                "reachable cells are not connected".into(),
            ));
        }
        Ok(())
    }

    pub fn reachable_is_connected(&self) -> bool {
        let Some(start) = self.reachable_cells().next() else {
            return false;
        };
        let dist = self.bfs_from(&[start]);
        self.reachable_cells()
            .all(|(cx, cz)| dist[self.index(cx, cz)].is_some())
    }

    /// 4-neighbourhood hop counts from a set of source cells.
    pub(crate) fn bfs_from(&self, sources: &[(usize, usize)]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.width * self.depth];
        let mut queue = VecDeque::new();
        for &(cx, cz) in sources {
            let i = self.index(cx, cz);
            if dist[i].is_none() {
                dist[i] = Some(0);
                queue.push_back((cx, cz));
            }
        }
        while let Some((cx, cz)) = queue.pop_front() {
            let d = dist[self.index(cx, cz)].unwrap();
            for (dx, dz) in NEIGHBORS4 {
                let (nx, nz) = (cx as i64 + dx, cz as i64 + dz);
                if self.is_reachable(nx, nz) {
                    let j = self.index(nx as usize, nz as usize);
                    if dist[j].is_none() {
                        dist[j] = Some(d + 1);
                        queue.push_back((nx as usize, nz as usize));
                    }
                }
            }
        }
        dist
    }
}

pub(crate) const NEIGHBORS4: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Actions in their stable integer encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    MoveAhead = 0,
    RotateLeft = 1,
    RotateRight = 2,
    LookDown = 3,
    LookUp = 4,
    Done = 5,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [
        Action::MoveAhead,
        Action::RotateLeft,
        Action::RotateRight,
        Action::LookDown,
        Action::LookUp,
        Action::Done,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibleObject {
    pub category: String,
    /// Degrees, positive to the right of the heading.
    pub bearing: f64,
    pub distance: f64,
}

/// Objects detected from one pose. Every listed entry has presence 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pose: Pose,
    pub visible: Vec<VisibleObject>,
}

impl Observation {
    pub fn sees(&self, category: &str) -> bool {
        self.visible.iter().any(|v| v.category == category)
    }
}

fn wrap_degrees(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Range, field-of-view and height-band gates.
pub fn visible_objects(scene: &Scene, pose: &Pose) -> Observation {
    let visible = scene
        .objects
        .iter()
        .filter(|o| o.band.pitch() == pose.pitch)
        .filter_map(|o| {
            let dx = o.x() - pose.x();
            let dz = o.z() - pose.z();
            let distance = (dx * dx + dz * dz).sqrt();
            if distance > VISIBILITY_RANGE + GEOM_EPS {
                return None;
            }
            let bearing = wrap_degrees(dx.atan2(dz).to_degrees() - pose.yaw as f64);
            (bearing.abs() <= HALF_FOV_DEG + GEOM_EPS).then(|| VisibleObject {
                category: o.category.clone(),
                bearing,
                distance,
            })
        })
        .collect();
    Observation {
        pose: *pose,
        visible,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepEvent {
    Moved,
    Blocked,
    Rotated,
    Tilted,
    /// A look action at the pitch limit; pose unchanged.
    Clamped,
    DoneSuccess,
    DoneFailure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub event: StepEvent,
    pub terminated: bool,
    pub success: bool,
    pub timed_out: bool,
}

#[derive(Clone, Debug)]
pub struct EpisodeState {
    pub scene: Arc<Scene>,
    pub goal: String,
    pub pose: Pose,
    pub step_count: usize,
    pub t_max: usize,
    pub terminated: bool,
    pub success: bool,
    pub done_issued: bool,
    /// Meters actually travelled.
    pub path_length: f64,
}

impl EpisodeState {
    pub fn observe(&self) -> Observation {
        visible_objects(&self.scene, &self.pose)
    }
}

pub fn reset_episode(
    scene: Arc<Scene>,
    goal: &str,
    seed: u64,
    t_max: usize,
) -> Result<EpisodeState> {
    if !scene.contains_category(goal) {
        return Err(Error::Config(format!(
            "goal `{goal}` not present in scene `{}`",
            scene.id
        )));
    }
    if t_max == 0 {
        return Err(Error::Config("T_max must be positive".into()));
    }
    let cells: Vec<(usize, usize)> = scene.reachable_cells().collect();
    if cells.is_empty() {
        return Err(Error::Config(format!(
            "scene `{}` has no reachable cell",
            scene.id
        )));
    }
    let mut rng = seed::rng_for(seed, &[b"reset", scene.id.as_bytes(), goal.as_bytes()]);
    let (cx, cz) = cells[rng.random_range(0..cells.len())];
    let yaw = rng.random_range(0..8) * YAW_STEP;
    Ok(EpisodeState {
        scene,
        goal: goal.to_string(),
        pose: Pose {
            cx,
            cz,
            yaw,
            pitch: 0,
        },
        step_count: 0,
        t_max,
        terminated: false,
        success: false,
        done_issued: false,
        path_length: 0.0,
    })
}

fn heading_delta(yaw: i32) -> (i64, i64) {
    match yaw {
        0 => (0, 1),
        45 => (1, 1),
        90 => (1, 0),
        135 => (1, -1),
        180 => (0, -1),
        225 => (-1, -1),
        270 => (-1, 0),
        315 => (-1, 1),
        _ => unreachable!("yaw invariant"),
    }
}

/// Advances one action. Diagonal headings move to the diagonal neighbour
/// and need both side cells free as well (no corner cutting).
pub fn step(state: &mut EpisodeState, action: Action) -> Result<(Observation, StepOutcome)> {
    if state.terminated {
        return Err(Error::Usage("step on a terminated episode".into()));
    }
    let pose = state.pose;
    let event = match action {
        Action::MoveAhead => {
            let (dx, dz) = heading_delta(pose.yaw);
            let (nx, nz) = (pose.cx as i64 + dx, pose.cz as i64 + dz);
            let scene = &state.scene;
            let clear = scene.is_reachable(nx, nz)
                && (dx == 0
                    || dz == 0
                    || (scene.is_reachable(pose.cx as i64 + dx, pose.cz as i64)
                        && scene.is_reachable(pose.cx as i64, pose.cz as i64 + dz)));
            if clear {
                state.pose.cx = nx as usize;
                state.pose.cz = nz as usize;
                let hop = if dx != 0 && dz != 0 {
                    GRID_STEP * std::f64::consts::SQRT_2
                } else {
                    GRID_STEP
                };
                state.path_length += hop;
                StepEvent::Moved
            } else {
                StepEvent::Blocked
            }
        }
        Action::RotateLeft => {
            state.pose.yaw = (pose.yaw - YAW_STEP).rem_euclid(360);
            StepEvent::Rotated
        }
        Action::RotateRight => {
            state.pose.yaw = (pose.yaw + YAW_STEP).rem_euclid(360);
            StepEvent::Rotated
        }
        Action::LookDown | Action::LookUp => {
            let delta = if action == Action::LookDown {
                -PITCH_STEP
            } else {
                PITCH_STEP
            };
            let next = pose.pitch + delta;
            if next.abs() > PITCH_STEP {
                StepEvent::Clamped
            } else {
                state.pose.pitch = next;
                StepEvent::Tilted
            }
        }
        Action::Done => {
            state.done_issued = true;
            state.terminated = true;
            if visible_objects(&state.scene, &state.pose).sees(&state.goal) {
                state.success = true;
                StepEvent::DoneSuccess
            } else {
                StepEvent::DoneFailure
            }
        }
    };
    state.step_count += 1;
    let mut timed_out = false;
    if !state.terminated && state.step_count >= state.t_max {
        state.terminated = true;
        timed_out = true;
    }
    Ok((
        state.observe(),
        StepOutcome {
            event,
            terminated: state.terminated,
            success: state.success,
            timed_out,
        },
    ))
}

/// Reachable cells from which some orientation sees the goal.
pub fn success_cells(scene: &Scene, goal: &str) -> Vec<(usize, usize)> {
    scene
        .reachable_cells()
        .filter(|&(cx, cz)| Pose::views_at(cx, cz).any(|p| visible_objects(scene, &p).sees(goal)))
        .collect()
}

/// Geodesic distance field to the success region of one goal.
#[derive(Clone, Debug)]
pub struct GoalDistance {
    width: usize,
    hops: Vec<Option<usize>>,
}

impl GoalDistance {
    pub fn new(scene: &Scene, goal: &str) -> Result<Self> {
        if !scene.contains_category(goal) {
            return Err(Error::Config(format!(
                "goal `{goal}` not present in scene `{}`",
                scene.id
            )));
        }
        let sources = success_cells(scene, goal);
        Ok(GoalDistance {
            width: scene.width,
            hops: scene.bfs_from(&sources),
        })
    }

    pub fn meters(&self, pose: &Pose) -> Option<f64> {
        self.hops[pose.cz * self.width + pose.cx].map(|h| h as f64 * GRID_STEP)
    }
}

/// BFS distance in meters (0.5 m per hop) to the nearest success cell.
pub fn shortest_path_length(scene: &Scene, pose: &Pose, goal: &str) -> Result<f64> {
    GoalDistance::new(scene, goal)?
        .meters(pose)
        .ok_or_else(|| Error::Unreachable(goal.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 5 wide, 4 deep, everything free except an object cell.
    fn open_scene(objects: Vec<ObjectInstance>) -> Scene {
        let (width, depth) = (5, 4);
        let mut reachable = vec![true; width * depth];
        for o in &objects {
            reachable[o.cz * width + o.cx] = false;
        }
        Scene {
            id: "t".into(),
            room: RoomCategory::Kitchen,
            width,
            depth,
            reachable,
            objects,
            seed: 0,
        }
    }

    fn obj(cat: &str, cx: usize, cz: usize, band: HeightBand) -> ObjectInstance {
        ObjectInstance {
            category: cat.into(),
            cx,
            cz,
            band,
        }
    }

    #[test]
    fn object_dead_ahead_is_visible() {
        let scene = open_scene(vec![obj("Kettle", 2, 3, HeightBand::Mid)]);
        let pose = Pose::new(2, 1, 0, 0).unwrap();
        let obs = visible_objects(&scene, &pose);
        assert_eq!(obs.visible.len(), 1);
        assert_eq!(obs.visible[0].distance, 1.0);
        assert_eq!(obs.visible[0].bearing, 0.0);
    }

    #[test]
    fn object_beyond_range_is_hidden() {
        let mut scene = open_scene(vec![]);
        scene.depth = 6;
        scene.reachable = vec![true; 30];
        scene.objects.push(obj("Kettle", 2, 4, HeightBand::Mid));
        let pose = Pose::new(2, 0, 0, 0).unwrap();
        assert!(visible_objects(&scene, &pose).visible.is_empty());
        // 1.5 m exactly is still inside
        let pose = Pose::new(2, 1, 0, 0).unwrap();
        assert_eq!(visible_objects(&scene, &pose).visible.len(), 1);
    }

    #[test]
    fn object_behind_is_hidden() {
        let scene = open_scene(vec![obj("Kettle", 2, 0, HeightBand::Mid)]);
        let pose = Pose::new(2, 1, 0, 0).unwrap();
        assert!(visible_objects(&scene, &pose).visible.is_empty());
    }

    #[test]
    fn pitch_gates_height_bands() {
        let scene = open_scene(vec![
            obj("GarbageCan", 1, 3, HeightBand::Low),
            obj("LightSwitch", 3, 3, HeightBand::High),
        ]);
        let level = Pose::new(2, 2, 0, 0).unwrap();
        assert!(visible_objects(&scene, &level).visible.is_empty());
        let down = Pose::new(2, 2, 0, -30).unwrap();
        assert!(visible_objects(&scene, &down).sees("GarbageCan"));
        let up = Pose::new(2, 2, 0, 30).unwrap();
        assert!(visible_objects(&scene, &up).sees("LightSwitch"));
    }

    #[test]
    fn fov_edge_is_inclusive() {
        // 45 degrees to the right at yaw 0
        let scene = open_scene(vec![obj("Kettle", 3, 2, HeightBand::Mid)]);
        let pose = Pose::new(2, 1, 0, 0).unwrap();
        let obs = visible_objects(&scene, &pose);
        assert_eq!(obs.visible.len(), 1);
        assert!((obs.visible[0].bearing - 45.0).abs() < 1e-9);
    }

    fn state_in(scene: Scene, pose: Pose, goal: &str) -> EpisodeState {
        EpisodeState {
            scene: Arc::new(scene),
            goal: goal.into(),
            pose,
            step_count: 0,
            t_max: DEFAULT_T_MAX,
            terminated: false,
            success: false,
            done_issued: false,
            path_length: 0.0,
        }
    }

    #[test]
    fn rotate_left_from_zero_wraps() {
        let scene = open_scene(vec![obj("Kettle", 4, 3, HeightBand::Mid)]);
        let mut s = state_in(scene, Pose::new(0, 0, 0, 0).unwrap(), "Kettle");
        let (_, out) = step(&mut s, Action::RotateLeft).unwrap();
        assert_eq!(s.pose.yaw(), 315);
        assert_eq!(out.event, StepEvent::Rotated);
        step(&mut s, Action::RotateRight).unwrap();
        step(&mut s, Action::RotateRight).unwrap();
        assert_eq!(s.pose.yaw(), 45);
        assert_eq!(s.pose.cell(), (0, 0));
    }

    #[test]
    fn blocked_move_keeps_pose() {
        let scene = open_scene(vec![obj("Kettle", 2, 2, HeightBand::Mid)]);
        let mut s = state_in(scene, Pose::new(2, 1, 0, 0).unwrap(), "Kettle");
        let (_, out) = step(&mut s, Action::MoveAhead).unwrap();
        assert_eq!(out.event, StepEvent::Blocked);
        assert_eq!(s.pose.cell(), (2, 1));
        assert_eq!(s.path_length, 0.0);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn move_off_grid_is_blocked() {
        let scene = open_scene(vec![obj("Kettle", 4, 3, HeightBand::Mid)]);
        let mut s = state_in(scene, Pose::new(0, 0, 180, 0).unwrap(), "Kettle");
        let (_, out) = step(&mut s, Action::MoveAhead).unwrap();
        assert_eq!(out.event, StepEvent::Blocked);
    }

    #[test]
    fn diagonal_move_and_corner_cutting() {
        let scene = open_scene(vec![obj("Kettle", 1, 0, HeightBand::Mid)]);
        // (0,0) facing 45 would cut the corner at (1,0)
        let mut s = state_in(scene.clone(), Pose::new(0, 0, 45, 0).unwrap(), "Kettle");
        assert_eq!(
            step(&mut s, Action::MoveAhead).unwrap().1.event,
            StepEvent::Blocked
        );
        let mut s = state_in(scene, Pose::new(2, 1, 45, 0).unwrap(), "Kettle");
        assert_eq!(
            step(&mut s, Action::MoveAhead).unwrap().1.event,
            StepEvent::Moved
        );
        assert_eq!(s.pose.cell(), (3, 2));
        assert!((s.path_length - 0.5 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn look_clamps_at_limits() {
        let scene = open_scene(vec![obj("Kettle", 4, 3, HeightBand::Mid)]);
        let mut s = state_in(scene, Pose::new(0, 0, 0, 0).unwrap(), "Kettle");
        assert_eq!(
            step(&mut s, Action::LookUp).unwrap().1.event,
            StepEvent::Tilted
        );
        assert_eq!(s.pose.pitch(), 30);
        assert_eq!(
            step(&mut s, Action::LookUp).unwrap().1.event,
            StepEvent::Clamped
        );
        assert_eq!(s.pose.pitch(), 30);
        step(&mut s, Action::LookDown).unwrap();
        step(&mut s, Action::LookDown).unwrap();
        assert_eq!(s.pose.pitch(), -30);
        assert_eq!(
            step(&mut s, Action::LookDown).unwrap().1.event,
            StepEvent::Clamped
        );
    }

    #[test]
    fn done_with_goal_in_view_succeeds() {
        // goal 1.2 m away is not on the grid; use (0.5, 1.0) offset → 1.118 m
        let scene = open_scene(vec![obj("Kettle", 3, 3, HeightBand::Mid)]);
        let mut s = state_in(scene, Pose::new(2, 1, 0, 0).unwrap(), "Kettle");
        let (_, out) = step(&mut s, Action::Done).unwrap();
        assert!(out.terminated && out.success);
        assert_eq!(out.event, StepEvent::DoneSuccess);
        assert!(step(&mut s, Action::MoveAhead).is_err());
    }

    #[test]
    fn done_without_goal_fails_and_terminates() {
        let scene = open_scene(vec![obj("Kettle", 3, 3, HeightBand::Mid)]);
        let mut s = state_in(scene, Pose::new(2, 1, 180, 0).unwrap(), "Kettle");
        let (_, out) = step(&mut s, Action::Done).unwrap();
        assert!(out.terminated && !out.success);
    }

    #[test]
    fn timeout_terminates_without_success() {
        let scene = open_scene(vec![obj("Kettle", 3, 3, HeightBand::Mid)]);
        let mut s = state_in(scene, Pose::new(2, 1, 0, 0).unwrap(), "Kettle");
        s.t_max = 3;
        for _ in 0..2 {
            assert!(!step(&mut s, Action::RotateLeft).unwrap().1.terminated);
        }
        let (_, out) = step(&mut s, Action::RotateLeft).unwrap();
        assert!(out.terminated && out.timed_out && !out.success);
    }

    #[test]
    fn reset_rejects_absent_goal() {
        let scene = Arc::new(open_scene(vec![obj("Kettle", 3, 3, HeightBand::Mid)]));
        assert!(matches!(
            reset_episode(scene, "Fridge", 1, 100),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn reset_is_deterministic() {
        let scene = Arc::new(open_scene(vec![obj("Kettle", 3, 3, HeightBand::Mid)]));
        let a = reset_episode(scene.clone(), "Kettle", 11, 100).unwrap();
        let b = reset_episode(scene, "Kettle", 11, 100).unwrap();
        assert_eq!(a.pose, b.pose);
        assert_eq!(a.pose.pitch(), 0);
        assert_eq!(a.step_count, 0);
    }

    #[test]
    fn shortest_path_zero_inside_success_cell() {
        let scene = open_scene(vec![obj("Kettle", 3, 3, HeightBand::Mid)]);
        let pose = Pose::new(2, 2, 0, 0).unwrap();
        assert_eq!(shortest_path_length(&scene, &pose, "Kettle").unwrap(), 0.0);
    }

    #[test]
    fn shortest_path_along_corridor() {
        // 1 x 10 corridor: goal at the far end, success cells within 1.5 m = 3 cells.
        let width = 1;
        let depth = 11;
        let mut reachable = vec![true; depth];
        reachable[10] = false;
        let scene = Scene {
            id: "corridor".into(),
            room: RoomCategory::Kitchen,
            width,
            depth,
            reachable,
            objects: vec![obj("Kettle", 0, 10, HeightBand::Mid)],
            seed: 0,
        };
        // success cells: cz = 7, 8, 9; start at cz = 1 → 6 hops
        let pose = Pose::new(0, 1, 0, 0).unwrap();
        assert_eq!(shortest_path_length(&scene, &pose, "Kettle").unwrap(), 3.0);
    }

    #[test]
    fn pose_rejects_bad_angles() {
        assert!(Pose::new(0, 0, 30, 0).is_err());
        assert!(Pose::new(0, 0, 0, 60).is_err());
        assert_eq!(Pose::new(0, 0, -45, 0).unwrap().yaw(), 315);
    }
}
