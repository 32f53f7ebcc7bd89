use std::sync::Arc;

use proptest::prelude::*;

use zonegraph::graph::hungarian::min_cost_assignment;
use zonegraph::graph::kmeans::{kmeans, sq_dist};
use zonegraph::graph::KnowledgeGraph;
use zonegraph::oracle::{best_simple_path, brute_force_assignment, flood_fill_distance};
use zonegraph::planner::plan_subgoal;
use zonegraph::sim::{
    generate_scene, parse_scene, reset_episode, step, write_scene, Action, GoalDistance,
    LayoutTable, RoomCategory, SceneSize,
};

fn room() -> impl Strategy<Value = RoomCategory> {
    prop_oneof![
        Just(RoomCategory::Kitchen),
        Just(RoomCategory::LivingRoom),
        Just(RoomCategory::Bedroom),
        Just(RoomCategory::Bathroom),
    ]
}

fn graph_from(m: usize, raw: &[f64]) -> KnowledgeGraph {
    let mut edges = vec![0.0; m * m];
    for i in 0..m {
        edges[i * m + i] = 1.0;
        for j in i + 1..m {
            let e = raw[i * m + j];
            // roughly a third of the pairs stay disconnected
            let e = if e < 0.3 { 0.0 } else { e };
            edges[i * m + j] = e;
            edges[j * m + i] = e;
        }
    }
    KnowledgeGraph {
        zones: m,
        dim: 1,
        room: RoomCategory::Kitchen,
        nodes: vec![0.0; m],
        edges,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_scenes_are_valid_and_round_trip(
        room in room(),
        w in 4usize..10,
        d in 4usize..10,
        seed in any::<u64>(),
    ) {
        let scene = generate_scene(&LayoutTable::default(), room, SceneSize::new(w, d), seed).unwrap();
        scene.validate().unwrap();
        prop_assert!(scene.reachable_is_connected());
        prop_assert!(!scene.goal_categories().is_empty());
        prop_assert_eq!(parse_scene(&write_scene(&scene, &[]), "p").unwrap(), scene);
    }

    #[test]
    fn bfs_distance_matches_flood_fill(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let scene = generate_scene(&LayoutTable::default(), RoomCategory::Bedroom, SceneSize::new(7, 6), seed).unwrap();
        let goals = scene.goal_categories();
        let goal = &goals[pick.index(goals.len())];
        let dist = GoalDistance::new(&scene, goal).unwrap();
        for (cx, cz) in scene.reachable_cells() {
            let pose = zonegraph::sim::Pose::new(cx, cz, 0, 0).unwrap();
            prop_assert_eq!(dist.meters(&pose), flood_fill_distance(&scene, goal, (cx, cz)));
        }
    }

    #[test]
    fn random_walks_stay_on_the_grid(
        seed in any::<u64>(),
        actions in prop::collection::vec(0usize..5, 1..60),
    ) {
        let scene = Arc::new(
            generate_scene(&LayoutTable::default(), RoomCategory::Kitchen, SceneSize::new(6, 6), seed).unwrap(),
        );
        let goal = scene.goal_categories()[0].clone();
        let mut state = reset_episode(scene.clone(), &goal, seed, 40).unwrap();
        let mut travelled = 0.0;
        for a in actions {
            if state.terminated {
                prop_assert!(step(&mut state, Action::MoveAhead).is_err());
                break;
            }
            let before = state.pose;
            step(&mut state, Action::from_index(a).unwrap()).unwrap();
            let p = state.pose;
            let ((x0, z0), (x1, z1)) = (before.cell(), p.cell());
            prop_assert!(scene.is_reachable(x1 as i64, z1 as i64));
            prop_assert!(p.pitch().abs() <= 30 && p.yaw() % 45 == 0);
            let (dx, dz) = (x1.abs_diff(x0), z1.abs_diff(z0));
            prop_assert!(dx <= 1 && dz <= 1);
            travelled += 0.5 * ((dx * dx + dz * dz) as f64).sqrt();
            prop_assert!(state.step_count <= state.t_max);
        }
        prop_assert!((state.path_length - travelled).abs() < 1e-9);
        prop_assert!(!state.done_issued && !state.success);
    }

    #[test]
    fn planner_finds_the_best_simple_path(
        m in 2usize..7,
        raw in prop::collection::vec(0.0f64..1.0, 36),
        from in any::<prop::sample::Index>(),
        to in any::<prop::sample::Index>(),
    ) {
        let g = graph_from(m, &raw);
        let (a, b) = (from.index(m), to.index(m));
        let plan = plan_subgoal(&g, a, b);
        match best_simple_path(&g.edges, m, a, b, 1e-12) {
            None => prop_assert!(!plan.reachable),
            Some((best, starts)) => {
                prop_assert!(plan.reachable);
                prop_assert!((plan.path_prob - best).abs() <= 1e-12);
                prop_assert!(starts.contains(&plan.subgoal));
                prop_assert!(a == b || g.edge(a, plan.subgoal) > 0.0);
            }
        }
    }

    #[test]
    fn assignment_is_optimal(
        m in 1usize..6,
        raw in prop::collection::vec(-5.0f64..5.0, 25),
    ) {
        let cost: Vec<Vec<f64>> = (0..m).map(|i| raw[i * 5..i * 5 + m].to_vec()).collect();
        let perm = min_cost_assignment(&cost);
        let mut seen = perm.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..m).collect::<Vec<_>>());
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        let (best, _) = brute_force_assignment(&cost);
        prop_assert!((total - best).abs() < 1e-9);
    }

    #[test]
    fn kmeans_labels_point_at_the_nearest_centre(
        pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 2..30),
        k in 1usize..5,
        seed in any::<u64>(),
    ) {
        let r = kmeans(&pts, k, seed);
        prop_assert_eq!(r.labels.len(), pts.len());
        prop_assert!(r.centers.len() <= k);
        for (p, &l) in pts.iter().zip(&r.labels) {
            let own = sq_dist(p, &r.centers[l]);
            prop_assert!(r.centers.iter().all(|c| own <= sq_dist(p, c) + 1e-9));
        }
        prop_assert_eq!(kmeans(&pts, k, seed).labels, r.labels);
    }
}
