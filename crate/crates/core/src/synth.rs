//! Deterministic synthetic scenes with ground truth.
//!
//! Targets follow piecewise-linear paths. Every frame a target is present it
//! gets a ground-truth box, usually a noisy detection, and a handful of
//! short dense point tracklets that ride along inside its box. False
//! positives are scattered over the canvas with low confidence.
//!
//! All coordinates are rounded to hundredths and colors to integers, so a
//! scene written with [`write_scene`] reads back to the same values.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_detections, write_dpts, write_results, SequenceBundle};
use crate::model::{
    Detection, DptPoint, DptTracklet, Frame, Point, Provenance, Trajectory, TrajectoryBox,
};

/// Path vertex: the target's box center at a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: Frame,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub entry_frame: Frame,
    pub exit_frame: Frame,
    /// Centers between waypoints are linear; before the first and after the
    /// last the path holds still.
    pub path: Vec<Waypoint>,
    pub width: f64,
    pub height: f64,
    pub color: [u8; 3],
}

impl TargetSpec {
    pub fn center_at(&self, frame: Frame) -> Point {
        let first = self.path[0];
        if frame <= first.frame {
            return Point::new(first.x, first.y);
        }
        for w in self.path.windows(2) {
            if frame <= w[1].frame {
                let t = (frame - w[0].frame) as f64 / (w[1].frame - w[0].frame) as f64;
                return Point::new(
                    w[0].x + (w[1].x - w[0].x) * t,
                    w[0].y + (w[1].y - w[0].y) * t,
                );
            }
        }
        let last = self.path[self.path.len() - 1];
        Point::new(last.x, last.y)
    }
}

/// Detections of `target` are suppressed on `first..=last`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionWindow {
    pub target: usize,
    pub first: Frame,
    pub last: Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Frames are numbered `1..=frame_count`.
    pub frame_count: u32,
    pub canvas: (f64, f64),
    pub targets: Vec<TargetSpec>,
    pub detection_dropout: f64,
    /// Standard deviation of the detection center jitter, pixels.
    pub detection_noise: f64,
    /// Probability of one false positive per frame.
    pub false_positive_rate: f64,
    pub dpts_per_target: u32,
    /// Mean tracklet lifetime in frames; lifetimes are uniform on
    /// `[mean / 2, 3 mean / 2]`.
    pub dpt_lifetime: u32,
    /// Standard deviation of the per-point jitter, pixels, clipped at three.
    pub dpt_noise: f64,
    pub occlusion_windows: Vec<OcclusionWindow>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        for (name, p) in [
            ("detection_dropout", self.detection_dropout),
            ("false_positive_rate", self.false_positive_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.detection_noise < 0.0 || self.dpt_noise < 0.0 {
            return bad("noise must be nonnegative".into());
        }
        if self.dpt_lifetime < 2 {
            return bad("dpt_lifetime must be at least 2".into());
        }
        for (i, t) in self.targets.iter().enumerate() {
            if t.exit_frame <= t.entry_frame {
                return bad(format!(
                    "target {i}: exit {} <= entry {}",
                    t.exit_frame, t.entry_frame
                ));
            }
            if t.path.is_empty() || t.path.windows(2).any(|w| w[1].frame <= w[0].frame) {
                return bad(format!("target {i}: path needs increasing waypoint frames"));
            }
            if !(t.width > 0.0 && t.height > 0.0) {
                return bad(format!("target {i}: nonpositive box size"));
            }
        }
        if let Some(o) = self
            .occlusion_windows
            .iter()
            .find(|o| o.target >= self.targets.len())
        {
            return bad(format!(
                "occlusion window names unknown target {}",
                o.target
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("scenario: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    fn occluded(&self, target: usize, frame: Frame) -> bool {
        self.occlusion_windows
            .iter()
            .any(|o| o.target == target && (o.first..=o.last).contains(&frame))
    }
}

fn q(v: f64) -> f64 {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Box from a quantized corner and size, centered the way files are read.
fn quantized_box(center: Point, width: f64, height: f64) -> (Point, f64, f64) {
    let (w, h) = (q(width), q(height));
    let left = q(center.x - width / 2.0);
    let top = q(center.y - height / 2.0);
    (Point::new(left + w / 2.0, top + h / 2.0), w, h)
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

fn flush(slot: &mut Slot, tracklets: &mut Vec<DptTracklet>) {
    let points = std::mem::take(&mut slot.points);
    if points.len() >= 2 {
        let id = tracklets.len() as u64;
        tracklets.push(DptTracklet::new(id, points).expect("consecutive points"));
    }
}

struct Slot {
    offset: Point,
    color: [f64; 3],
    remaining: u32,
    points: Vec<DptPoint>,
}

/// Bundle and ground truth for a scenario. Ground-truth ids are target
/// index plus one.
pub fn generate(spec: &ScenarioSpec) -> Result<(SequenceBundle, Vec<Trajectory>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut detections = Vec::new();
    let mut tracklets: Vec<DptTracklet> = Vec::new();
    let mut truth: Vec<Trajectory> = (0..spec.targets.len())
        .map(|i| Trajectory {
            id: i as u64 + 1,
            boxes: Vec::new(),
            source_cluster: i,
        })
        .collect();
    let mut slots: Vec<Vec<Slot>> = spec.targets.iter().map(|_| Vec::new()).collect();
    let half = (spec.dpt_lifetime / 2).max(2);
    let lifetime =
        |rng: &mut ChaCha8Rng| rng.random_range(half..=spec.dpt_lifetime + spec.dpt_lifetime / 2);

    let new_slot = |rng: &mut ChaCha8Rng, t: &TargetSpec, remaining: u32| Slot {
        offset: Point::new(
            q(rng.random_range(-0.4..=0.4) * t.width),
            q(rng.random_range(-0.4..=0.4) * t.height),
        ),
        color: std::array::from_fn(|c| {
            (t.color[c] as f64 + rng.random_range(-10.0..=10.0))
                .round()
                .clamp(0.0, 255.0)
        }),
        remaining,
        points: Vec::new(),
    };

    for frame in 1..=spec.frame_count {
        for (i, target) in spec.targets.iter().enumerate() {
            let present = (target.entry_frame..=target.exit_frame).contains(&frame);
            if !present {
                for slot in &mut slots[i] {
                    flush(slot, &mut tracklets);
                }
                slots[i].clear();
                continue;
            }
            let center = target.center_at(frame);
            let (gc, gw, gh) = quantized_box(center, target.width, target.height);
            truth[i].boxes.push(TrajectoryBox {
                frame,
                center: gc,
                width: gw,
                height: gh,
                provenance: Provenance::Detected,
            });

            let dropped = rng.random::<f64>() < spec.detection_dropout;
            let noise = Point::new(
                gaussian(&mut rng, spec.detection_noise),
                gaussian(&mut rng, spec.detection_noise),
            );
            let confidence = q(rng.random_range(0.7..=1.0));
            if !dropped && !spec.occluded(i, frame) {
                let (c, w, h) = quantized_box(center + noise, target.width, target.height);
                detections.push(Detection::new(frame, c, w, h, confidence)?);
            }

            if slots[i].is_empty() {
                for _ in 0..spec.dpts_per_target {
                    let life = lifetime(&mut rng);
                    let staggered = if frame == 1 || frame == target.entry_frame {
                        rng.random_range(2..=life)
                    } else {
                        life
                    };
                    let slot = new_slot(&mut rng, target, staggered);
                    slots[i].push(slot);
                }
            }
            for s in 0..slots[i].len() {
                if slots[i][s].remaining == 0 {
                    flush(&mut slots[i][s], &mut tracklets);
                    let life = lifetime(&mut rng);
                    slots[i][s] = new_slot(&mut rng, target, life);
                }
                let limit = 3.0 * spec.dpt_noise;
                let jitter = Point::new(
                    gaussian(&mut rng, spec.dpt_noise).clamp(-limit, limit),
                    gaussian(&mut rng, spec.dpt_noise).clamp(-limit, limit),
                );
                let slot = &mut slots[i][s];
                let p = center + slot.offset + jitter;
                slot.points.push(DptPoint {
                    frame,
                    position: Point::new(q(p.x), q(p.y)),
                    appearance: slot.color,
                });
                slot.remaining -= 1;
            }
        }
        if rng.random::<f64>() < spec.false_positive_rate {
            let w = rng.random_range(30.0..=50.0);
            let h = rng.random_range(60.0..=100.0);
            let x = rng.random_range(w / 2.0..=spec.canvas.0 - w / 2.0);
            let y = rng.random_range(h / 2.0..=spec.canvas.1 - h / 2.0);
            let confidence = q(rng.random_range(0.0..=0.3));
            let (c, w, h) = quantized_box(Point::new(x, y), w, h);
            detections.push(Detection::new(frame, c, w, h, confidence)?);
        }
    }
    for target_slots in &mut slots {
        for slot in target_slots {
            flush(slot, &mut tracklets);
        }
    }
    truth.retain(|t| !t.boxes.is_empty());
    Ok((
        SequenceBundle {
            detections,
            dpts: tracklets,
            frame_count: Some(spec.frame_count),
            image_size: Some(spec.canvas),
        },
        truth,
    ))
}

pub const PRESETS: [&str; 4] = ["crossing", "occlusion", "parallel", "crowd4"];

fn straight(
    entry: Frame,
    exit: Frame,
    from: (f64, f64),
    to: (f64, f64),
    color: [u8; 3],
) -> TargetSpec {
    TargetSpec {
        entry_frame: entry,
        exit_frame: exit,
        path: vec![
            Waypoint {
                frame: entry,
                x: from.0,
                y: from.1,
            },
            Waypoint {
                frame: exit,
                x: to.0,
                y: to.1,
            },
        ],
        width: 40.0,
        height: 100.0,
        color,
    }
}

fn base(frame_count: u32, targets: Vec<TargetSpec>) -> ScenarioSpec {
    ScenarioSpec {
        frame_count,
        canvas: (640.0, 480.0),
        targets,
        detection_dropout: 0.0,
        detection_noise: 1.0,
        false_positive_rate: 0.1,
        dpts_per_target: 6,
        dpt_lifetime: 12,
        dpt_noise: 0.5,
        occlusion_windows: Vec::new(),
        seed: 7,
    }
}

/// Named scenarios.
///
/// * `parallel`: two targets side by side with identical motion.
/// * `occlusion`: two targets; the first loses its detections for frames
///   16 to 23.
/// * `crossing`: two targets on diagonal paths meeting at frame 21; the one
///   passing behind loses its detections for frames 17 to 24.
/// * `crowd4`: four targets, two of which appear one after the other, with
///   detection dropout.
pub fn preset(name: &str) -> Result<ScenarioSpec> {
    let red = [200, 40, 40];
    let blue = [40, 60, 200];
    let spec = match name {
        "parallel" => base(
            40,
            vec![
                straight(1, 40, (100.0, 240.0), (490.0, 240.0), red),
                straight(1, 40, (145.0, 240.0), (535.0, 240.0), blue),
            ],
        ),
        "occlusion" => ScenarioSpec {
            occlusion_windows: vec![OcclusionWindow {
                target: 0,
                first: 16,
                last: 23,
            }],
            ..base(
                40,
                vec![
                    straight(1, 40, (80.0, 150.0), (470.0, 150.0), red),
                    straight(1, 40, (560.0, 340.0), (170.0, 340.0), blue),
                ],
            )
        },
        "crossing" => ScenarioSpec {
            occlusion_windows: vec![OcclusionWindow {
                target: 1,
                first: 17,
                last: 24,
            }],
            ..base(
                40,
                vec![
                    straight(1, 40, (100.0, 140.0), (490.0, 335.0), red),
                    straight(1, 40, (100.0, 340.0), (490.0, 145.0), blue),
                ],
            )
        },
        "crowd4" => ScenarioSpec {
            detection_dropout: 0.05,
            ..base(
                50,
                vec![
                    straight(1, 50, (60.0, 110.0), (550.0, 110.0), red),
                    straight(1, 50, (580.0, 370.0), (90.0, 370.0), blue),
                    straight(1, 24, (150.0, 240.0), (380.0, 250.0), [40, 180, 60]),
                    straight(27, 50, (300.0, 230.0), (530.0, 240.0), [220, 200, 40]),
                ],
            )
        },
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(spec)
}

/// Writes `det.csv`, `dpt.csv`, `gt.csv` and `spec.json` into `dir`.
pub fn write_scene(
    dir: impl AsRef<Path>,
    spec: &ScenarioSpec,
    bundle: &SequenceBundle,
    truth: &[Trajectory],
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_detections(dir.join("det.csv"), &bundle.detections)?;
    write_dpts(dir.join("dpt.csv"), &bundle.dpts)?;
    write_results(dir.join("gt.csv"), truth)?;
    let path = dir.join("spec.json");
    fs::write(&path, spec.to_json() + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still(frames: u32) -> ScenarioSpec {
        ScenarioSpec {
            frame_count: frames,
            canvas: (200.0, 200.0),
            targets: vec![straight(
                1,
                frames,
                (100.0, 100.0),
                (100.0, 100.0),
                [100, 100, 100],
            )],
            detection_dropout: 0.0,
            detection_noise: 0.0,
            false_positive_rate: 0.0,
            dpts_per_target: 3,
            dpt_lifetime: 12,
            dpt_noise: 0.0,
            occlusion_windows: Vec::new(),
            seed: 1,
        }
    }

    #[test]
    fn static_target() {
        let (bundle, truth) = generate(&still(10)).unwrap();
        assert_eq!(bundle.detections.len(), 10);
        assert!(bundle
            .detections
            .iter()
            .all(|d| d.center == Point::new(100.0, 100.0)));
        assert!(!bundle.dpts.is_empty());
        for t in &bundle.dpts {
            assert!(t.points().iter().all(|p| p.position == t.first().position));
        }
        assert_eq!(truth.len(), 1);
        assert_eq!(truth[0].boxes.len(), 10);
    }

    #[test]
    fn full_dropout_leaves_points() {
        let spec = ScenarioSpec {
            detection_dropout: 1.0,
            ..still(10)
        };
        let (bundle, _) = generate(&spec).unwrap();
        assert!(bundle.detections.is_empty());
        assert!(!bundle.dpts.is_empty());
    }

    #[test]
    fn presets_shape() {
        for name in PRESETS {
            let spec = preset(name).unwrap();
            let (bundle, truth) = generate(&spec).unwrap();
            assert_eq!(truth.len(), spec.targets.len(), "{name}");
            assert!(bundle.validate().is_ok());
        }
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
        let occ = preset("occlusion").unwrap();
        let hole = occ.occlusion_windows[0];
        assert_eq!(hole.last - hole.first + 1, 8);
        let (bundle, _) = generate(&occ).unwrap();
        let seen: Vec<Frame> = bundle
            .detections
            .iter()
            .filter(|d| d.confidence >= 0.7 && d.center.y < 240.0)
            .map(|d| d.frame)
            .collect();
        assert!(seen.iter().all(|f| !(16..=23).contains(f)));
        assert_eq!(seen.len(), 32);
    }

    #[test]
    fn crossing_meets_once() {
        let spec = preset("crossing").unwrap();
        let (a, b) = (&spec.targets[0], &spec.targets[1]);
        let meets: Vec<Frame> = (1..=40)
            .filter(|&f| a.center_at(f).distance(b.center_at(f)) < 1e-9)
            .collect();
        assert_eq!(meets, vec![21]);
    }

    #[test]
    fn parallel_boxes_are_disjoint() {
        let spec = preset("parallel").unwrap();
        let (_, truth) = generate(&spec).unwrap();
        for f in 1..=40 {
            let a = truth[0].box_at(f).unwrap().bbox();
            let b = truth[1].box_at(f).unwrap().bbox();
            assert_eq!(a.iou(&b), 0.0);
            assert!((b.center.x - a.center.x - 45.0).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic() {
        let spec = preset("crowd4").unwrap();
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = ScenarioSpec {
            seed: 8,
            ..spec.clone()
        };
        assert_ne!(generate(&spec).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn json_round_trip() {
        let spec = preset("crossing").unwrap();
        assert_eq!(ScenarioSpec::from_json(&spec.to_json()).unwrap(), spec);
        assert!(ScenarioSpec::from_json(r#"{"frame_count": 3}"#).is_err());
    }

    #[test]
    fn invalid_specs() {
        let mut s = still(5);
        s.detection_dropout = 1.5;
        assert!(generate(&s).is_err());
        let mut s = still(5);
        s.targets[0].exit_frame = 1;
        assert!(s.validate().is_err());
    }
}
