use std::path::Path;
use std::process::{Command, Output};

use zonegraph::encoder::{cosine, EmbeddingProvider};
use zonegraph::graph::load_graph;
use zonegraph::train::{parse_goal_log, Checkpoint};

fn zonegraph(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zonegraph"))
        .current_dir(dir)
        .env("ZONEGRAPH_THREADS", "2")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = zonegraph(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code and the single stderr line of a failing run.
fn fails(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = zonegraph(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "multi-line error: {err}");
    (out.status.code().unwrap(), err.trim_end().to_string())
}

const SMALL: [&str; 8] = [
    "--set",
    "embedding.dim=16",
    "--set",
    "graph.zones=4",
    "--set",
    "train.hidden=24",
    "--set",
    "sim.t_max=40",
];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(&SMALL);
    v
}

#[test]
fn gen_scenes_writes_the_requested_count() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "gen-scenes",
        "--room",
        "bedroom",
        "--count",
        "4",
        "--seed",
        "7",
        "--out",
        "s",
    ];
    ok(dir.path(), &args);
    let files: Vec<_> = std::fs::read_dir(dir.path().join("s")).unwrap().collect();
    assert_eq!(files.len(), 4);
}

#[test]
fn mixed_rooms_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "gen-scenes",
            "--room",
            "bedroom",
            "--count",
            "1",
            "--size",
            "6x6",
            "--out",
            "s",
        ],
    );
    ok(
        d,
        &[
            "gen-scenes",
            "--room",
            "kitchen",
            "--count",
            "1",
            "--size",
            "6x6",
            "--out",
            "s",
        ],
    );
    let (code, err) = fails(
        d,
        &with_small(&["build-graph", "--scenes", "s", "--out", "g.kg"]),
    );
    assert_ne!(code, 0);
    assert!(err.starts_with("error[category-mismatch]:"), "{err}");
}

#[test]
fn seed_determines_scenes_and_graph_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        ok(
            d,
            &[
                "gen-scenes",
                "--count",
                "2",
                "--size",
                "6x6",
                "--seed",
                "3",
                "--out",
                out,
            ],
        );
        let graph = format!("{out}.kg");
        ok(
            d,
            &with_small(&["build-graph", "--scenes", out, "--out", &graph]),
        );
    }
    // headers echo the output paths, so compare everything after them
    let body = |p: std::path::PathBuf| {
        let text = std::fs::read_to_string(p).unwrap();
        text.lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    for name in ["kitchen-000.scene", "kitchen-001.scene"] {
        assert_eq!(body(d.join("a").join(name)), body(d.join("b").join(name)));
    }
    assert_eq!(body(d.join("a.kg")), body(d.join("b.kg")));
}

#[test]
fn full_pipeline_produces_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "gen-scenes",
            "--count",
            "2",
            "--size",
            "6x6",
            "--seed",
            "1",
            "--out",
            "s",
        ],
    );
    ok(
        d,
        &with_small(&["build-graph", "--scenes", "s", "--out", "g.kg"]),
    );
    let train = [
        "train",
        "--scenes",
        "s",
        "--graph",
        "g.kg",
        "--episodes",
        "100",
        "--workers",
        "2",
        "--out",
        "p.ckpt",
        "--goal-log",
        "goals.jsonl",
    ];
    ok(d, &with_small(&train));
    let eval = [
        "eval",
        "--ckpt",
        "p.ckpt",
        "--scenes",
        "s",
        "--episodes",
        "6",
        "--seeds",
        "1,2,3",
        "--out",
        "r.jsonl",
    ];
    let stdout = ok(d, &with_small(&eval));
    assert!(stdout.starts_with("SR="), "{stdout}");

    let ckpt = Checkpoint::load(&d.join("p.ckpt")).unwrap();
    assert!(ckpt.echo.iter().any(|l| l == "train.episodes = 100"));
    let log = parse_goal_log(
        &std::fs::read_to_string(d.join("goals.jsonl")).unwrap(),
        "log",
    )
    .unwrap();
    assert_eq!(log.len(), 100);

    let report = std::fs::read_to_string(d.join("r.jsonl")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "report-v1");
    assert!(lines.contains(&"# eval.seeds = 1,2,3"));
    let body: Vec<&str> = lines
        .iter()
        .copied()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    // 18 episode records, the report object, the summary line
    assert_eq!(body.len(), 20);
    for rec in &body[..18] {
        let v: serde_json::Value = serde_json::from_str(rec).unwrap();
        for key in [
            "seed",
            "episode",
            "scene",
            "goal",
            "success",
            "path_length",
            "shortest_length",
            "final_dts",
        ] {
            assert!(v.get(key).is_some(), "record lacks {key}");
        }
    }
    let summary: serde_json::Value = serde_json::from_str(body[18]).unwrap();
    assert_eq!(summary["per_seed"].as_array().unwrap().len(), 3);
    for key in ["sr", "spl", "dts"] {
        assert!(summary[key]["mean"].is_number() && summary[key]["std"].is_number());
    }
    assert!(body[19].starts_with("SR=") && body[19].contains(" ±") && body[19].contains(" DTS="));
}

#[test]
fn inspect_graph_reports_shape_and_nearest_categories() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["gen-scenes", "--count", "2", "--size", "6x6", "--out", "s"],
    );
    ok(
        d,
        &with_small(&["build-graph", "--scenes", "s", "--out", "g.kg"]),
    );
    let text = ok(d, &["inspect-graph", "g.kg", "--top", "1"]);
    assert!(
        text.contains("\nM 4\n") && text.contains("\nN 16\n"),
        "{text}"
    );

    // linear scan over every category for each node
    let graph = load_graph(&d.join("g.kg")).unwrap();
    let provider = EmbeddingProvider::synthetic(0, 16);
    for m in 0..graph.zones {
        let best = zonegraph::categories::GOAL_CATEGORIES
            .iter()
            .map(|c| {
                (
                    *c,
                    cosine(
                        graph.node(m),
                        provider.object_embedding(c).unwrap().as_slice(),
                    ),
                )
            })
            .fold(
                ("", f64::NEG_INFINITY),
                |a, b| if b.1 > a.1 { b } else { a },
            );
        let line = text
            .lines()
            .find(|l| l.starts_with(&format!("node {m}:")))
            .unwrap();
        assert!(
            line.contains(&format!(" {} {:.3}", best.0, best.1)),
            "{line}"
        );
    }
}

#[test]
fn corrupted_graph_header_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.kg"),
        "# comment\nkg-v9 M=2 N=2 room=kitchen\n",
    )
    .unwrap();
    let (_, err) = fails(dir.path(), &["inspect-graph", "bad.kg"]);
    assert!(
        err.starts_with("error[parse]:") && err.contains("bad.kg:2:"),
        "{err}"
    );
}

#[test]
fn error_categories_are_single_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (code, err) = fails(d, &["train", "--no-such-flag"]);
    assert_eq!(code, 2);
    assert!(err.starts_with("error[usage]:"), "{err}");

    ok(
        d,
        &["gen-scenes", "--count", "1", "--size", "6x6", "--out", "s"],
    );
    let (_, err) = fails(d, &["eval", "--ckpt", "missing.ckpt", "--scenes", "s"]);
    assert!(
        err.starts_with("error[io]:") && err.contains("missing.ckpt"),
        "{err}"
    );

    std::fs::write(d.join("c.cfg"), "graph.zones = 4\ngraph.colour = red\n").unwrap();
    let (_, err) = fails(d, &["--config", "c.cfg", "selfcheck"]);
    assert!(
        err.starts_with("error[config]:") || err.starts_with("error[parse]:"),
        "{err}"
    );
    assert!(err.contains(":2:"), "{err}");
}

#[test]
fn selfcheck_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = zonegraph(dir.path(), &["selfcheck"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.lines().count() >= 12);
    assert!(text
        .lines()
        .all(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")));
    assert!(text.contains("PASS gradient_a2c"));
}
