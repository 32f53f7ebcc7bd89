//! Procedural scene generation from per-room zone tables.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{HeightBand, ObjectInstance, RoomCategory, Scene, NEIGHBORS4};
use crate::categories::is_goal_category;
use crate::error::{Error, Result};
use crate::seed;

const DEFAULT_LAYOUTS: &str = include_str!("../../data/layouts.txt");
const MAX_ATTEMPTS: usize = 500;
const MIN_GOALS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SceneSize {
    pub width: usize,
    pub depth: usize,
}

impl SceneSize {
    pub fn new(width: usize, depth: usize) -> Self {
        SceneSize { width, depth }
    }
}

impl std::str::FromStr for SceneSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (w, d) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Usage(format!("size `{s}` is not WxD")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Usage(format!("size `{s}` is not WxD")))
        };
        Ok(SceneSize::new(parse(w)?, parse(d)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZoneTemplate {
    pub name: String,
    pub objects: Vec<(String, HeightBand)>,
}

impl ZoneTemplate {
    fn goal_categories(&self) -> impl Iterator<Item = &str> {
        self.objects
            .iter()
            .map(|(c, _)| c.as_str())
            .filter(|c| is_goal_category(c))
    }
}

/// Zone templates per room category.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutTable {
    rooms: BTreeMap<RoomCategory, Vec<ZoneTemplate>>,
}

impl Default for LayoutTable {
    fn default() -> Self {
        LayoutTable::parse(DEFAULT_LAYOUTS, "<builtin layouts>").expect("builtin layout table")
    }
}

impl LayoutTable {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut rooms: BTreeMap<RoomCategory, Vec<ZoneTemplate>> = BTreeMap::new();
        let mut current = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            match words.next() {
                Some("room") => {
                    let name = words
                        .next()
                        .ok_or_else(|| Error::parse(origin, i + 1, "room without a name"))?;
                    let room: RoomCategory = name
                        .parse()
                        .map_err(|e: Error| Error::parse(origin, i + 1, e.to_string()))?;
                    rooms.entry(room).or_default();
                    current = Some(room);
                }
                Some("zone") => {
                    let room = current
                        .ok_or_else(|| Error::parse(origin, i + 1, "zone before any room"))?;
                    let name = words
                        .next()
                        .ok_or_else(|| Error::parse(origin, i + 1, "zone without a name"))?;
                    let objects = words
                        .map(|w| {
                            let (cat, band) = w.split_once('/').ok_or_else(|| {
                                Error::parse(origin, i + 1, format!("`{w}` is not Category/band"))
                            })?;
                            let band = band
                                .parse()
                                .map_err(|e: Error| Error::parse(origin, i + 1, e.to_string()))?;
                            Ok((cat.to_string(), band))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if objects.is_empty() {
                        return Err(Error::parse(origin, i + 1, "zone lists no objects"));
                    }
                    rooms.get_mut(&room).unwrap().push(ZoneTemplate {
                        name: name.to_string(),
                        objects,
                    });
                }
                Some(other) => {
                    return Err(Error::parse(
                        origin,
                        i + 1,
                        format!("unknown directive `{other}`"),
                    ))
                }
                None => unreachable!(),
            }
        }
        Ok(LayoutTable { rooms })
    }

    pub fn zones(&self, room: RoomCategory) -> &[ZoneTemplate] {
        self.rooms.get(&room).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Builds a scene whose objects sit in 2–4 contiguous zones drawn from the
/// room's layout table. Deterministic in `(table, room, size, seed)`.
pub fn generate_scene(
    table: &LayoutTable,
    room: RoomCategory,
    size: SceneSize,
    seed: u64,
) -> Result<Scene> {
    if size.width < 4 || size.depth < 4 {
        return Err(Error::Generation(format!(
            "{}x{} is too small to host {MIN_GOALS} goal objects (minimum 4x4)",
            size.width, size.depth
        )));
    }
    let templates = table.zones(room);
    let mut distinct: Vec<&str> = templates.iter().flat_map(|z| z.goal_categories()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < MIN_GOALS {
        return Err(Error::Generation(format!(
            "layout table for {room} offers only {} goal categories",
            distinct.len()
        )));
    }

    let mut rng = seed::rng_for(seed, &[b"scene", room.as_str().as_bytes()]);
    for _ in 0..MAX_ATTEMPTS {
        let Some(zones) = pick_zones(templates, &mut rng) else {
            continue;
        };
        if let Some(scene) = place(room, size, seed, &zones, &mut rng) {
            return Ok(scene);
        }
    }
    Err(Error::Generation(format!(
        "could not place a valid {room} layout in {}x{} after {MAX_ATTEMPTS} attempts",
        size.width, size.depth
    )))
}

fn pick_zones<'a>(
    templates: &'a [ZoneTemplate],
    rng: &mut impl Rng,
) -> Option<Vec<&'a ZoneTemplate>> {
    let mut order: Vec<&ZoneTemplate> = templates.iter().collect();
    order.shuffle(rng);
    let target = rng.random_range(2..=4usize).min(order.len());
    let mut chosen = Vec::new();
    let mut goals: Vec<&str> = Vec::new();
    for zone in order {
        if chosen.len() >= target && goals.len() >= MIN_GOALS {
            break;
        }
        if chosen.len() == 4 {
            return None;
        }
        goals.extend(zone.goal_categories());
        goals.sort_unstable();
        goals.dedup();
        chosen.push(zone);
    }
    (goals.len() >= MIN_GOALS && chosen.len() >= 2).then_some(chosen)
}

fn place(
    room: RoomCategory,
    size: SceneSize,
    seed: u64,
    zones: &[&ZoneTemplate],
    rng: &mut impl Rng,
) -> Option<Scene> {
    let SceneSize { width, depth } = size;
    let mut occupied = vec![false; width * depth];
    let mut objects = Vec::new();
    for zone in zones {
        let free: Vec<usize> = (0..width * depth).filter(|&i| !occupied[i]).collect();
        if free.is_empty() {
            return None;
        }
        let anchor = free[rng.random_range(0..free.len())];
        let (ax, az) = ((anchor % width) as i64, (anchor / width) as i64);
        for (category, band) in &zone.objects {
            let mut slot = None;
            for radius in 1..=2i64 {
                let candidates: Vec<usize> = (-radius..=radius)
                    .flat_map(|dz| (-radius..=radius).map(move |dx| (ax + dx, az + dz)))
                    .filter(|&(x, z)| {
                        x >= 0 && z >= 0 && (x as usize) < width && (z as usize) < depth
                    })
                    .map(|(x, z)| z as usize * width + x as usize)
                    .filter(|&i| !occupied[i])
                    .collect();
                if !candidates.is_empty() {
                    slot = Some(candidates[rng.random_range(0..candidates.len())]);
                    break;
                }
            }
            let i = slot?;
            occupied[i] = true;
            objects.push(ObjectInstance {
                category: category.clone(),
                cx: i % width,
                cz: i / width,
                band: *band,
            });
        }
    }
    let scene = Scene {
        id: format!("{room}-{seed}"),
        room,
        width,
        depth,
        reachable: occupied.iter().map(|o| !o).collect(),
        objects,
        seed,
    };
    // every object must be approachable and the free space one piece
    let approachable = scene.objects.iter().all(|o| {
        NEIGHBORS4
            .iter()
            .any(|(dx, dz)| scene.is_reachable(o.cx as i64 + dx, o.cz as i64 + dz))
    });
    (approachable && scene.validate().is_ok()).then_some(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::categories::GOAL_CATEGORIES;

    #[test]
    fn builtin_table_covers_every_room() {
        let table = LayoutTable::default();
        for room in RoomCategory::ALL {
            assert!(table.zones(room).len() >= 2, "{room}");
        }
    }

    #[test]
    fn builtin_table_covers_every_goal() {
        let table = LayoutTable::default();
        for goal in GOAL_CATEGORIES {
            let present = RoomCategory::ALL.iter().any(|&r| {
                table
                    .zones(r)
                    .iter()
                    .any(|z| z.objects.iter().any(|(c, _)| c == goal))
            });
            assert!(present, "{goal} never generated");
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let table = LayoutTable::default();
        let a = generate_scene(&table, RoomCategory::Bedroom, SceneSize::new(8, 8), 7).unwrap();
        let b = generate_scene(&table, RoomCategory::Bedroom, SceneSize::new(8, 8), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kitchen_has_four_goal_categories() {
        let table = LayoutTable::default();
        for seed in 0..50 {
            let s =
                generate_scene(&table, RoomCategory::Kitchen, SceneSize::new(8, 8), seed).unwrap();
            assert!(s.goal_categories().len() >= 4);
        }
    }

    #[test]
    fn too_small_is_an_error() {
        let table = LayoutTable::default();
        let err = generate_scene(&table, RoomCategory::Kitchen, SceneSize::new(3, 8), 0);
        assert!(matches!(err, Err(Error::Generation(_))));
    }

    #[test]
    fn table_parse_errors_carry_line_numbers() {
        let err = LayoutTable::parse("room kitchen\nzone a Sink\n", "x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = LayoutTable::parse("zone a Sink/mid\n", "x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn size_parses() {
        assert_eq!("8x6".parse::<SceneSize>().unwrap(), SceneSize::new(8, 6));
        assert!("8".parse::<SceneSize>().is_err());
    }
}
