use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;
use mltrack::affinity::{
    angle_score, assemble, common_frames, to_cost, velocity_from_parts, w_angle, w_dd_pair, w_det,
    w_dist, w_pd, w_pd_intersect, w_pd_link, w_pp, w_speed, PointTrack, NO_INFORMATION,
};
use mltrack::flow::{link_detections, link_tracklets, ConfidenceScale};
use mltrack::model::{BBox, Frame, Point};
use mltrack::pipeline::prefilter_tracklets;
use mltrack::synth::{generate, preset};
use mltrack::TrackerConfig;
use proptest::prelude::*;

fn track(
    frames: std::ops::Range<Frame>,
    start: Point,
    step: Point,
    size: Option<(f64, f64)>,
) -> PointTrack {
    PointTrack::new(
        frames
            .enumerate()
            .map(|(k, f)| {
                let p = start + step * k as f64;
                let boxes = size
                    .map(|(w, h)| vec![BBox::new(p, w, h)])
                    .unwrap_or_default();
                (f, p, boxes)
            })
            .collect(),
    )
}

#[test]
fn half_overlapping_boxes_give_a_third() {
    let a = PointTrack::new(vec![(
        1,
        Point::new(0.0, 0.0),
        vec![BBox::new(Point::new(0.0, 0.0), 10.0, 10.0)],
    )]);
    let b = PointTrack::new(vec![(
        1,
        Point::new(5.0, 0.0),
        vec![BBox::new(Point::new(5.0, 0.0), 10.0, 10.0)],
    )]);
    let inter = 5.0 * 10.0;
    assert_abs_diff_eq!(
        w_det(&a, &b),
        inter / (100.0 + 100.0 - inter),
        epsilon = 1e-12
    );
}

#[test]
fn vertical_offset_of_045_heights() {
    let c = TrackerConfig::default();
    let a = track(
        1..6,
        Point::new(0.0, 0.0),
        Point::new(1.0, 0.0),
        Some((40.0, 100.0)),
    );
    let b = track(
        1..6,
        Point::new(0.0, 45.0),
        Point::new(1.0, 0.0),
        Some((40.0, 100.0)),
    );
    let z: f64 = (0.45 - c.mu_dist) / c.sigma_dist;
    let dh = (-0.5 * z * z).exp();
    assert_abs_diff_eq!(dh, (-0.5f64).exp(), epsilon = 1e-12);
    assert_abs_diff_eq!(w_dist(&a, &b, &c), 0.5 * (dh + 1.0), epsilon = 1e-9);
    assert_abs_diff_eq!(w_dist(&a, &b, &c), 0.8033, epsilon = 1e-4);
}

#[test]
fn speeds_two_and_four() {
    let a = track(1..6, Point::new(0.0, 0.0), Point::new(2.0, 0.0), None);
    let b = track(1..6, Point::new(0.0, 9.0), Point::new(4.0, 0.0), None);
    assert_abs_diff_eq!(w_speed(&a, &b), 0.5, epsilon = 1e-12);
}

#[test]
fn angle_examples() {
    let c = TrackerConfig::default();
    let a = track(1..4, Point::new(0.0, 0.0), Point::new(3.0, 0.0), None);
    let rad = 50f64.to_radians();
    let b = track(
        1..4,
        Point::new(0.0, 0.0),
        Point::new(3.0 * rad.cos(), 3.0 * rad.sin()),
        None,
    );
    assert_abs_diff_eq!(w_angle(&a, &b, &c), (-0.5f64).exp(), epsilon = 1e-6);
    let back = track(1..4, Point::new(0.0, 0.0), Point::new(-3.0, 0.0), None);
    assert_abs_diff_eq!(
        w_angle(&a, &back, &c),
        (-(180f64 / 50.0).powi(2) / 2.0).exp(),
        epsilon = 1e-9
    );
    assert_abs_diff_eq!(angle_score(180.0, &c), 0.00153, epsilon = 1e-5);
}

#[test]
fn velocity_blend_example() {
    let angle = (-0.5f64).exp();
    assert_abs_diff_eq!(
        velocity_from_parts(0.5, angle),
        0.5 + 0.25 * (0.5 + angle),
        epsilon = 1e-12
    );
    assert_abs_diff_eq!(velocity_from_parts(0.5, 0.6065), 0.7766, epsilon = 1e-4);
}

#[test]
fn point_inside_half_the_time() {
    let c = TrackerConfig::default();
    let det = track(
        1..5,
        Point::new(0.0, 0.0),
        Point::new(2.0, 0.0),
        Some((20.0, 40.0)),
    );
    // inside at frames 1 and 2, 30 px to the right afterwards
    let point = PointTrack::new(
        [(1, 0.0), (2, 2.0), (3, 34.0), (4, 36.0)]
            .iter()
            .map(|&(f, x)| (f, Point::new(x, 0.0), vec![]))
            .collect(),
    );
    assert_abs_diff_eq!(w_pd_intersect(&point, &det), 0.5, epsilon = 1e-12);
    let link = w_pd_link(&point, &det, &c);
    assert_abs_diff_eq!(w_pd(&point, &det, &c), 0.5 * (0.5 + link), epsilon = 1e-12);
}

#[test]
fn detection_pair_sharing_one_of_two() {
    let ti: BTreeSet<usize> = [1, 2].into();
    let tj: BTreeSet<usize> = [2, 3].into();
    assert_abs_diff_eq!(w_dd_pair(&ti, &tj, true), 0.5, epsilon = 1e-12);
    assert_eq!(w_dd_pair(&ti, &ti, true), 1.0);
    assert_eq!(w_dd_pair(&ti, &tj, false), 0.0);
}

#[test]
fn disjoint_tracks_bridge_or_not() {
    let c = TrackerConfig::default();
    let a = track(1..4, Point::new(0.0, 0.0), Point::new(1.0, 0.0), None);
    let b = track(7..9, Point::new(0.0, 0.0), Point::new(1.0, 0.0), None);
    assert_eq!(w_pp(&a, &b, true, &c), 1.0);
    assert_eq!(w_pp(&a, &b, false, &c), 0.0);
    assert_eq!(w_pd(&a, &b, &c), NO_INFORMATION);
}

fn arb_track() -> impl Strategy<Value = PointTrack> {
    (
        1u32..8,
        prop::collection::vec(((-8i32..=8), (-8i32..=8), 0u8..3), 1..9),
        (-100i32..100, -100i32..100),
        (10u32..60, 20u32..120),
    )
        .prop_map(|(start, steps, (x0, y0), (w, h))| {
            let mut p = Point::new(x0 as f64, y0 as f64);
            let mut samples = Vec::new();
            for (k, (dx, dy, boxed)) in steps.into_iter().enumerate() {
                p += Point::new(dx as f64 * 0.5, dy as f64 * 0.5);
                // 0: no box, 1: box on the point, 2: box shifted off the point
                let boxes = match boxed {
                    0 => vec![],
                    1 => vec![BBox::new(p, w as f64, h as f64)],
                    _ => vec![BBox::new(p + Point::new(w as f64, 0.0), w as f64, h as f64)],
                };
                samples.push((start + k as u32, p, boxes));
            }
            PointTrack::new(samples)
        })
}

fn in_unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn affinities_in_range_and_symmetric(a in arb_track(), b in arb_track()) {
        let c = TrackerConfig::default();
        if !common_frames(&a, &b).is_empty() {
            prop_assert!(in_unit(w_det(&a, &b)));
            prop_assert!(in_unit(w_dist(&a, &b, &c)));
            prop_assert_eq!(w_det(&a, &b), w_det(&b, &a));
            prop_assert!((w_dist(&a, &b, &c) - w_dist(&b, &a, &c)).abs() < 1e-12);
        }
        for v in [w_speed(&a, &b), w_angle(&a, &b, &c), w_pp(&a, &b, false, &c), w_pp(&a, &b, true, &c), w_pd(&a, &b, &c)] {
            prop_assert!(in_unit(v), "{v}");
        }
        prop_assert_eq!(w_speed(&a, &b), w_speed(&b, &a));
        prop_assert!((w_angle(&a, &b, &c) - w_angle(&b, &a, &c)).abs() < 1e-12);
        prop_assert!((w_pp(&a, &b, false, &c) - w_pp(&b, &a, false, &c)).abs() < 1e-12);
    }

    #[test]
    fn translation_leaves_affinities_unchanged(a in arb_track(), b in arb_track(), dx in -50i32..50, dy in -50i32..50) {
        let c = TrackerConfig::default();
        let off = Point::new(dx as f64, dy as f64);
        let (ta, tb) = (a.translated(off), b.translated(off));
        let close = |x: f64, y: f64| (x - y).abs() < 1e-9;
        prop_assert!(close(w_speed(&a, &b), w_speed(&ta, &tb)));
        prop_assert!(close(w_angle(&a, &b, &c), w_angle(&ta, &tb, &c)));
        prop_assert!(close(w_pp(&a, &b, false, &c), w_pp(&ta, &tb, false, &c)));
        prop_assert!(close(w_pd(&a, &b, &c), w_pd(&ta, &tb, &c)));
    }

    #[test]
    fn a_moving_boxed_track_matches_itself(len in 2u32..10, vx in 1i32..6, vy in -5i32..6) {
        let c = TrackerConfig::default();
        let t = track(1..1 + len, Point::new(10.0, 20.0), Point::new(vx as f64, vy as f64), Some((30.0, 80.0)));
        prop_assert_eq!(w_det(&t, &t), 1.0);
        prop_assert_eq!(w_dist(&t, &t, &c), 1.0);
        prop_assert_eq!(w_speed(&t, &t), 1.0);
        prop_assert_eq!(w_angle(&t, &t, &c), 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn assembled_matrices_are_well_formed(seed in 0u64..1000, name in prop::sample::select(vec!["parallel", "occlusion", "crossing"])) {
        let c = TrackerConfig::default();
        let mut spec = preset(name).unwrap();
        spec.seed = seed;
        spec.frame_count = 20;
        let (bundle, _) = generate(&spec).unwrap();
        let tracklets: Vec<_> = bundle.dpts.iter().filter_map(|t| t.clipped(1, 20)).collect();
        let tracklets = prefilter_tracklets(&tracklets, &bundle.detections, &c);
        let point_tracks = link_tracklets(&tracklets, &c);
        let scale = ConfidenceScale::from_detections(&bundle.detections);
        let detection_tracks = link_detections(&bundle.detections, &scale, &c);
        let input = mltrack::affinity::SpatialInput {
            point_tracks: &point_tracks,
            tracklets: &tracklets,
            detection_tracks: &detection_tracks,
            detections: &bundle.detections,
        };
        let w = assemble(&input, &c);
        prop_assert_eq!(w.len(), point_tracks.len() + detection_tracks.len());
        prop_assert_eq!(&w.matrix, &w.matrix.transpose());
        for i in 0..w.len() {
            prop_assert_eq!(w.matrix[(i, i)], 1.0);
            for j in 0..w.len() {
                let v = w.matrix[(i, j)];
                prop_assert!(in_unit(v));
                prop_assert!(v == 0.0 || v == NO_INFORMATION || v >= c.affinity_floor);
                if i >= w.n_point_tracks && j >= w.n_point_tracks && i != j {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
        let q = to_cost(&w);
        prop_assert!(q.matrix.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
