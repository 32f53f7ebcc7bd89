//! `kg-v1` text format: header, `M` node rows of `N` floats, `M` edge rows
//! of `M` floats. Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::path::Path;

use super::KnowledgeGraph;
use crate::error::{Error, Result};

pub const GRAPH_MAGIC: &str = "kg-v1";

pub fn write_graph(graph: &KnowledgeGraph, echo: &[String]) -> String {
    let mut out = format!(
        "{GRAPH_MAGIC} M={} N={} room={}\n",
        graph.zones, graph.dim, graph.room
    );
    for line in echo {
        writeln!(out, "# {line}").unwrap();
    }
    let rows = graph
        .nodes
        .chunks(graph.dim)
        .chain(graph.edges.chunks(graph.zones.max(1)));
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    out
}

pub fn save_graph(path: &Path, graph: &KnowledgeGraph, echo: &[String]) -> Result<()> {
    std::fs::write(path, write_graph(graph, echo)).map_err(|e| Error::io(path, e))
}

pub fn load_graph(path: &Path) -> Result<KnowledgeGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_graph(&text, &path.display().to_string())
}

fn header_field<'a>(fields: &[&'a str], key: &str) -> Option<&'a str> {
    fields
        .iter()
        .find_map(|f| f.strip_prefix(key)?.strip_prefix('='))
}

pub fn parse_graph(text: &str, origin: &str) -> Result<KnowledgeGraph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (n, header) = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "empty graph file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.first() != Some(&GRAPH_MAGIC) {
        return Err(Error::parse(
            origin,
            n,
            format!("expected `{GRAPH_MAGIC}` header"),
        ));
    }
    let bad_header = || Error::parse(origin, n, format!("malformed header `{header}`"));
    let zones: usize = header_field(&fields, "M")
        .and_then(|v| v.parse().ok())
        .ok_or_else(bad_header)?;
    let dim: usize = header_field(&fields, "N")
        .and_then(|v| v.parse().ok())
        .ok_or_else(bad_header)?;
    let room = header_field(&fields, "room")
        .ok_or_else(bad_header)?
        .parse()
        .map_err(|e: Error| Error::parse(origin, n, e.to_string()))?;

    let mut read_rows = |count: usize, width: usize, what: &str| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count * width);
        for _ in 0..count {
            let (n, line) = lines.next().ok_or_else(|| {
                Error::parse(origin, 0, format!("unexpected end of file in {what}"))
            })?;
            let row = line
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::parse(origin, n, format!("unparsable float `{v}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != width {
                return Err(Error::parse(
                    origin,
                    n,
                    format!("{what} row has {} values, expected {width}", row.len()),
                ));
            }
            out.extend(row);
        }
        Ok(out)
    };
    let nodes = read_rows(zones, dim, "node")?;
    let edges = read_rows(zones, zones, "edge")?;
    if let Some((n, _)) = lines.next() {
        return Err(Error::parse(origin, n, "trailing content after edge rows"));
    }
    let graph = KnowledgeGraph {
        zones,
        dim,
        room,
        nodes,
        edges,
    };
    graph
        .validate()
        .map_err(|e| Error::parse(origin, n, e.to_string()))?;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RoomCategory;

    fn sample() -> KnowledgeGraph {
        KnowledgeGraph {
            zones: 2,
            dim: 3,
            room: RoomCategory::Bathroom,
            nodes: vec![0.1, 0.2, 1.0 / 3.0, -0.5, 0.0, 1e-17],
            edges: vec![1.0, 0.125, 0.125, 1.0],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let g = sample();
        let text = write_graph(&g, &["zones=2".into()]);
        assert_eq!(parse_graph(&text, "mem").unwrap(), g);
    }

    #[test]
    fn corrupted_header_reports_line() {
        let text = write_graph(&sample(), &[]).replacen("kg-v1", "kg-v0", 1);
        match parse_graph(&text, "mem") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_row_rejected() {
        let text = "kg-v1 M=1 N=2 room=kitchen\n0.5\n1\n";
        match parse_graph(text, "mem") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
