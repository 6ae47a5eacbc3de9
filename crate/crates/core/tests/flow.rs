use mltrack::flow::{
    extract_tracks, oracle_enumerate, solve_min_cost_flow, ConfidenceScale, FlowGraph, FlowNode,
    FlowSolution, Transition,
};
use mltrack::model::{Category, Detection, DptPoint, DptTracklet, Point};
use mltrack::TrackerConfig;
use proptest::prelude::*;

fn node(feature: usize, frame: u32, detection_cost: f64) -> FlowNode {
    FlowNode {
        feature,
        first_frame: frame,
        last_frame: frame,
        detection_cost,
        entry_cost: 10.0,
        exit_cost: 10.0,
    }
}

/// Arc-by-arc conservation, written independently of the library check.
fn conserves(g: &FlowGraph, s: &FlowSolution) -> bool {
    (0..g.nodes.len()).all(|i| {
        let inflow = s.entry[i] as u32
            + g.transitions
                .iter()
                .zip(&s.transitions)
                .filter(|(t, &on)| on && t.to == i)
                .count() as u32;
        let outflow = s.exit[i] as u32
            + g.transitions
                .iter()
                .zip(&s.transitions)
                .filter(|(t, &on)| on && t.from == i)
                .count() as u32;
        let through = s.active[i] as u32;
        inflow == through && outflow == through && (!g.is_mandatory() || through == 1)
    })
}

/// Every flag vector over entry, exit, detection and transition arcs.
fn brute_force(g: &FlowGraph) -> Vec<FlowSolution> {
    let n = g.nodes.len();
    let m = g.transitions.len();
    let bits = 3 * n + m;
    assert!(bits <= 20);
    let mut feasible = Vec::new();
    for mask in 0u32..(1 << bits) {
        let bit = |k: usize| mask >> k & 1 == 1;
        let mut s = FlowSolution::empty(g);
        for i in 0..n {
            s.entry[i] = bit(i);
            s.exit[i] = bit(n + i);
            s.active[i] = bit(2 * n + i);
        }
        for t in 0..m {
            s.transitions[t] = bit(3 * n + t);
        }
        if conserves(g, &s) {
            s.objective = s.cost(g);
            feasible.push(s);
        }
    }
    feasible
}

#[test]
fn weak_single_detection_stays_off() {
    let g = FlowGraph::new(Category::Mid, vec![node(0, 1, -3.0)], vec![]).unwrap();
    let all = brute_force(&g);
    assert_eq!(all.len(), 2);
    let s = solve_min_cost_flow(&g);
    assert!(!s.active[0]);
    assert_eq!(s.objective, 0.0);
}

#[test]
fn strong_single_detection_forms_a_track() {
    let g = FlowGraph::new(Category::Mid, vec![node(0, 1, -25.0)], vec![]).unwrap();
    let s = solve_min_cost_flow(&g);
    assert!(s.active[0] && s.entry[0] && s.exit[0]);
    assert_eq!(s.objective, -5.0);
    assert_eq!(extract_tracks(&s, &g).len(), 1);
}

#[test]
fn three_detection_chain() {
    // frames 1, 9, 17 with F_max 15: links 1->9 and 9->17 only
    let config = TrackerConfig::default();
    let dets: Vec<Detection> = [1, 9, 17]
        .iter()
        .map(|&f| Detection::new(f, Point::new(100.0 + f as f64, 100.0), 20.0, 40.0, 1.0).unwrap())
        .collect();
    let scale = ConfidenceScale::from_detections(&dets);
    let linked = FlowGraph::from_detections(&dets, &scale, &config);
    assert_eq!(
        linked
            .transitions
            .iter()
            .map(|t| (t.from, t.to))
            .collect::<Vec<_>>(),
        vec![(0, 1), (1, 2)]
    );
    let nodes = [1, 9, 17]
        .iter()
        .enumerate()
        .map(|(i, &f)| node(i, f, -25.0))
        .collect();
    let g = FlowGraph::new(Category::Mid, nodes, linked.transitions.clone()).unwrap();
    let feasible = brute_force(&g);
    assert_eq!(feasible.len(), 13);
    let best = feasible
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .unwrap();
    let s = solve_min_cost_flow(&g);
    assert!((s.objective - best.objective).abs() < 1e-9);
    let tracks = extract_tracks(&s, &g);
    assert_eq!(tracks.len(), 1);
    assert_eq!(tracks[0].members().len(), 3);
    assert_eq!(oracle_enumerate(&g).unwrap().objective, best.objective);
}

#[test]
fn oracle_refuses_large_graphs() {
    let nodes = (0..11).map(|i| node(i, i as u32 + 1, -1.0)).collect();
    let g = FlowGraph::new(Category::Mid, nodes, vec![]).unwrap();
    assert!(oracle_enumerate(&g).is_err());
}

fn arb_detections(max: usize) -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec(
        (1u32..25, 0.0..200.0f64, 0.0..200.0f64, 0.0..1.0f64),
        1..=max,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(f, x, y, c)| Detection::new(f, Point::new(x, y), 20.0, 40.0, c).unwrap())
            .collect()
    })
}

fn arb_tracklets(max: usize) -> impl Strategy<Value = Vec<DptTracklet>> {
    prop::collection::vec(
        (
            1u32..25,
            2u32..6,
            0.0..200.0f64,
            0.0..200.0f64,
            -8.0..8.0f64,
            0.0..255.0f64,
        ),
        1..=max,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(id, (f, len, x, y, step, color))| {
                DptTracklet::new(
                    id as u64,
                    (0..len)
                        .map(|k| DptPoint {
                            frame: f + k,
                            position: Point::new(x + step * k as f64, y),
                            appearance: [color; 3],
                        })
                        .collect(),
                )
                .unwrap()
            })
            .collect()
    })
}

fn arb_raw_graph() -> impl Strategy<Value = FlowGraph> {
    (1usize..=10, any::<bool>())
        .prop_flat_map(|(n, low)| {
            (
                prop::collection::vec((1u32..12, -30.0..5.0f64, 0.0..12.0f64, 0.0..12.0f64), n),
                prop::collection::vec((0..n, 0..n, -3.0..6.0f64), 0..=(2 * n)),
                Just(low),
            )
        })
        .prop_map(|(nodes, arcs, low)| {
            let nodes: Vec<FlowNode> = nodes
                .into_iter()
                .enumerate()
                .map(|(i, (f, c, cin, cout))| FlowNode {
                    feature: i,
                    first_frame: f,
                    last_frame: f,
                    detection_cost: if low { 0.0 } else { c },
                    entry_cost: cin,
                    exit_cost: cout,
                })
                .collect();
            let mut transitions: Vec<Transition> = Vec::new();
            for (from, to, cost) in arcs {
                if nodes[to].first_frame > nodes[from].last_frame
                    && !transitions.iter().any(|t| t.from == from && t.to == to)
                {
                    transitions.push(Transition { from, to, cost });
                }
            }
            let category = if low { Category::Low } else { Category::Mid };
            FlowGraph::new(category, nodes, transitions).unwrap()
        })
}

fn check_against_oracle(g: &FlowGraph) -> Result<(), TestCaseError> {
    let s = solve_min_cost_flow(g);
    let o = oracle_enumerate(g).unwrap();
    prop_assert!(
        (s.objective - o.objective).abs() < 1e-9,
        "solver {} oracle {}",
        s.objective,
        o.objective
    );
    prop_assert!(conserves(g, &s));
    s.check_conservation(g).unwrap();
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn solver_matches_oracle_on_detections(dets in arb_detections(10)) {
        let config = TrackerConfig::default();
        let scale = ConfidenceScale::from_detections(&dets);
        check_against_oracle(&FlowGraph::from_detections(&dets, &scale, &config))?;
    }

    #[test]
    fn solver_matches_oracle_on_tracklets(tracklets in arb_tracklets(10)) {
        let config = TrackerConfig::default();
        check_against_oracle(&FlowGraph::from_tracklets(&tracklets, &config))?;
    }

    #[test]
    fn solver_matches_oracle_on_raw_graphs(g in arb_raw_graph()) {
        check_against_oracle(&g)?;
    }

    #[test]
    fn solver_matches_brute_force_on_tiny_graphs(g in arb_raw_graph().prop_filter("tiny", |g| 3 * g.nodes.len() + g.transitions.len() <= 16)) {
        let best = brute_force(&g).into_iter().map(|s| s.objective).fold(f64::INFINITY, f64::min);
        let s = solve_min_cost_flow(&g);
        prop_assert!((s.objective - best).abs() < 1e-9, "solver {} brute force {}", s.objective, best);
    }

    #[test]
    fn detection_tracks_are_well_formed(dets in arb_detections(40)) {
        let config = TrackerConfig::default();
        let scale = ConfidenceScale::from_detections(&dets);
        let g = FlowGraph::from_detections(&dets, &scale, &config);
        let s = solve_min_cost_flow(&g);
        prop_assert!(conserves(&g, &s));
        let mut used = vec![false; dets.len()];
        for t in extract_tracks(&s, &g) {
            for w in t.members().windows(2) {
                let dt = w[1].first_frame - w[0].last_frame;
                prop_assert!(dt >= 1 && dt <= config.f_max);
            }
            for m in t.members() {
                prop_assert!(!used[m.feature]);
                used[m.feature] = true;
            }
        }
    }

    #[test]
    fn every_tracklet_in_exactly_one_track(tracklets in arb_tracklets(30)) {
        let config = TrackerConfig::default();
        let g = FlowGraph::from_tracklets(&tracklets, &config);
        let s = solve_min_cost_flow(&g);
        let mut seen = vec![0; tracklets.len()];
        for t in extract_tracks(&s, &g) {
            for m in t.members() {
                seen[m.feature] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn higher_entry_exit_costs_never_add_tracks(dets in arb_detections(30), extra in 0.0..30.0f64) {
        let base = TrackerConfig::default();
        let raised = TrackerConfig { c_in: base.c_in + extra, c_out: base.c_out + extra, ..base.clone() };
        let scale = ConfidenceScale::from_detections(&dets);
        let count = |c: &TrackerConfig| {
            let g = FlowGraph::from_detections(&dets, &scale, c);
            extract_tracks(&solve_min_cost_flow(&g), &g).len()
        };
        prop_assert!(count(&raised) <= count(&base));
    }
}
