//! `scene-v1` text format.
//!
//! ```text
//! scene-v1
//! # optional comment lines (effective configuration echo)
//! id kitchen-7
//! room kitchen
//! seed 7
//! size <width> <depth>
//! reachable
//! <depth rows of width '0'/'1' characters, row cz = 0 first>
//! objects <count>
//! <category> <x meters> <z meters> <low|mid|high>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{ObjectInstance, Scene, GRID_STEP};
use crate::error::{Error, Result};

pub const SCENE_MAGIC: &str = "scene-v1";

pub fn write_scene(scene: &Scene, echo: &[String]) -> String {
    let mut out = String::new();
    writeln!(out, "{SCENE_MAGIC}").unwrap();
    for line in echo {
        writeln!(out, "# {line}").unwrap();
    }
    writeln!(out, "id {}", scene.id).unwrap();
    writeln!(out, "room {}", scene.room).unwrap();
    writeln!(out, "seed {}", scene.seed).unwrap();
    writeln!(out, "size {} {}", scene.width, scene.depth).unwrap();
    writeln!(out, "reachable").unwrap();
    for row in scene.reachable.chunks(scene.width) {
        let line: String = row.iter().map(|&r| if r { '1' } else { '0' }).collect();
        writeln!(out, "{line}").unwrap();
    }
    writeln!(out, "objects {}", scene.objects.len()).unwrap();
    for o in &scene.objects {
        writeln!(
            out,
            "{} {} {} {}",
            o.category,
            o.x(),
            o.z(),
            o.band.as_str()
        )
        .unwrap();
    }
    out
}

pub fn save_scene(path: &Path, scene: &Scene, echo: &[String]) -> Result<()> {
    std::fs::write(path, write_scene(scene, echo)).map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scene(&text, &path.display().to_string())
}

/// Loads every `*.scene` file in a directory, ordered by file name.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<Scene>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "scene"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no .scene files in {}",
            dir.display()
        )));
    }
    paths.iter().map(|p| load_scene(p)).collect()
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    origin: &'a str,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Ok((i + 1, trimmed));
        }
        Err(Error::parse(
            self.origin,
            0,
            format!("unexpected end of file, expected {what}"),
        ))
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next_line(key)?;
        match line.split_once(char::is_whitespace) {
            Some((k, rest)) if k == key => Ok((n, rest.trim())),
            _ if line == key => Ok((n, "")),
            _ => Err(Error::parse(self.origin, n, format!("expected `{key}`"))),
        }
    }
}

fn meters_to_cell(v: f64, origin: &str, line: usize) -> Result<usize> {
    let cells = v / GRID_STEP;
    if !v.is_finite() || v < 0.0 || (cells - cells.round()).abs() > 1e-9 {
        return Err(Error::parse(
            origin,
            line,
            format!("coordinate {v} is off the 0.5 m grid"),
        ));
    }
    Ok(cells.round() as usize)
}

pub fn parse_scene(text: &str, origin: &str) -> Result<Scene> {
    let mut lines = Lines {
        inner: text.lines().enumerate().peekable(),
        origin,
    };
    let (n, magic) = lines.next_line("header")?;
    if magic != SCENE_MAGIC {
        return Err(Error::parse(
            origin,
            n,
            format!("expected `{SCENE_MAGIC}` header, found `{magic}`"),
        ));
    }
    let (_, id) = lines.keyed("id")?;
    let (n, room) = lines.keyed("room")?;
    let room = room
        .parse()
        .map_err(|e: Error| Error::parse(origin, n, e.to_string()))?;
    let (n, seed) = lines.keyed("seed")?;
    let seed = seed
        .parse()
        .map_err(|_| Error::parse(origin, n, format!("bad seed `{seed}`")))?;
    let (n, size) = lines.keyed("size")?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|v| {
            v.parse()
                .map_err(|_| Error::parse(origin, n, format!("bad size `{size}`")))
        })
        .collect::<Result<_>>()?;
    let [width, depth] = dims[..] else {
        return Err(Error::parse(origin, n, "size needs width and depth"));
    };
    lines.keyed("reachable")?;
    let mut reachable = Vec::with_capacity(width * depth);
    for _ in 0..depth {
        let (n, row) = lines.next_line("reachability row")?;
        if row.len() != width {
            return Err(Error::parse(
                origin,
                n,
                format!("row has {} cells, expected {width}", row.len()),
            ));
        }
        for ch in row.chars() {
            match ch {
                '1' => reachable.push(true),
                '0' => reachable.push(false),
                _ => return Err(Error::parse(origin, n, format!("bad cell `{ch}`"))),
            }
        }
    }
    let (n, count) = lines.keyed("objects")?;
    let count: usize = count
        .parse()
        .map_err(|_| Error::parse(origin, n, format!("bad object count `{count}`")))?;
    let mut objects = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, line) = lines.next_line("object record")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [category, x, z, band] = fields[..] else {
            return Err(Error::parse(
                origin,
                n,
                "object record needs `category x z band`",
            ));
        };
        let coord = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::parse(origin, n, format!("bad coordinate `{v}`")))
                .and_then(|f| meters_to_cell(f, origin, n))
        };
        let (cx, cz) = (coord(x)?, coord(z)?);
        if cx >= width || cz >= depth {
            return Err(Error::parse(origin, n, "object outside the grid"));
        }
        objects.push(ObjectInstance {
            category: category.to_string(),
            cx,
            cz,
            band: band
                .parse()
                .map_err(|e: Error| Error::parse(origin, n, e.to_string()))?,
        });
    }
    if let Ok((n, extra)) = lines.next_line("") {
        return Err(Error::parse(
            origin,
            n,
            format!("trailing content `{extra}`"),
        ));
    }
    Ok(Scene {
        id: id.to_string(),
        room,
        width,
        depth,
        reachable,
        objects,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_scene, LayoutTable, RoomCategory, SceneSize};

    #[test]
    fn round_trip() {
        let scene = generate_scene(
            &LayoutTable::default(),
            RoomCategory::Kitchen,
            SceneSize::new(8, 6),
            3,
        )
        .unwrap();
        let text = write_scene(&scene, &["seed=3".into()]);
        let back = parse_scene(&text, "mem").unwrap();
        assert_eq!(scene, back);
        assert_eq!(write_scene(&back, &["seed=3".into()]), text);
    }

    #[test]
    fn wrong_magic_rejected() {
        let err = parse_scene("scene-v2\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn off_grid_object_rejected() {
        let text = "scene-v1\nid a\nroom kitchen\nseed 0\nsize 2 1\nreachable\n10\nobjects 1\nSink 0.3 0 mid\n";
        let err = parse_scene(text, "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 9, .. }), "{err}");
    }
}
