//! Readers and writers for the on-disk formats.
//!
//! Detections, ground truth and results use the MOTChallenge layout
//! `frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z` with 1-based frames.
//! Dense point tracklets are stored as header-free rows
//! `track_id,frame,x,y,r,g,b`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::model::{
    Detection, DptPoint, DptTracklet, Frame, Point, Provenance, Trajectory, TrajectoryBox,
};

/// All features of one sequence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceBundle {
    pub detections: Vec<Detection>,
    pub dpts: Vec<DptTracklet>,
    pub frame_count: Option<u32>,
    pub image_size: Option<(f64, f64)>,
}

impl SequenceBundle {
    pub fn is_empty(&self) -> bool {
        self.detections.is_empty() && self.dpts.is_empty()
    }

    /// Smallest and largest frame touched by any feature.
    pub fn frame_range(&self) -> Option<(Frame, Frame)> {
        let det = self.detections.iter().map(|d| (d.frame, d.frame));
        let dpt = self.dpts.iter().map(|t| (t.first_frame(), t.last_frame()));
        det.chain(dpt)
            .reduce(|(a0, a1), (b0, b1)| (a0.min(b0), a1.max(b1)))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.frame_count {
            if let Some((_, last)) = self.frame_range() {
                if last > n {
                    return Err(Error::InvalidInput(format!(
                        "feature at frame {last} beyond frame count {n}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Items read from a file plus the number of rows skipped with a warning.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub rejected: usize,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn fields<'a>(path: &Path, line: usize, text: &'a str, expected: usize) -> Result<Vec<&'a str>> {
    let cols: Vec<&str> = text.split(',').map(str::trim).collect();
    if cols.len() < expected {
        return Err(parse_error(
            path,
            line,
            format!("expected {expected} columns, found {}", cols.len()),
        ));
    }
    Ok(cols)
}

fn num<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_error(path, line, format!("invalid {name} `{s}`")))
}

/// Formats with at most two decimals and no trailing zeros.
fn fmt_num(v: f64) -> String {
    let mut s = format!("{v:.2}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

struct MotRow {
    frame: Frame,
    id: i64,
    bbox_left: f64,
    bbox_top: f64,
    width: f64,
    height: f64,
    conf: f64,
}

fn parse_mot(path: &Path, text: &str) -> Result<Vec<(usize, MotRow)>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let c = fields(path, line, raw, 7)?;
        let frame: i64 = num(path, line, "frame", c[0])?;
        if frame < 0 {
            return Err(parse_error(path, line, format!("negative frame {frame}")));
        }
        let id = num::<f64>(path, line, "id", c[1])? as i64;
        rows.push((
            line,
            MotRow {
                frame: frame as Frame,
                id,
                bbox_left: num(path, line, "bb_left", c[2])?,
                bbox_top: num(path, line, "bb_top", c[3])?,
                width: num(path, line, "bb_width", c[4])?,
                height: num(path, line, "bb_height", c[5])?,
                conf: num(path, line, "conf", c[6])?,
            },
        ));
    }
    Ok(rows)
}

/// Reads MOT detections in file order. Rows with a nonpositive extent are
/// skipped and counted in [`Parsed::rejected`].
pub fn read_detections(path: impl AsRef<Path>) -> Result<Parsed<Detection>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut items = Vec::new();
    let mut rejected = 0;
    for (line, r) in parse_mot(path, &text)? {
        let center = Point::new(r.bbox_left + r.width / 2.0, r.bbox_top + r.height / 2.0);
        match Detection::new(r.frame, center, r.width, r.height, r.conf) {
            Ok(d) => items.push(d),
            Err(_) => {
                warn!(
                    "{}:{line}: nonpositive box extent, row skipped",
                    path.display()
                );
                rejected += 1;
            }
        }
    }
    Ok(Parsed { items, rejected })
}

pub fn write_detections(path: impl AsRef<Path>, detections: &[Detection]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for d in detections {
        let b = d.bbox();
        writeln!(
            out,
            "{},-1,{},{},{},{},{},-1,-1,-1",
            d.frame,
            fmt_num(b.left()),
            fmt_num(b.top()),
            fmt_num(d.width),
            fmt_num(d.height),
            fmt_num(d.confidence)
        )
        .unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads dense point tracklets. Rows of one id must have consecutive frames;
/// ids with a single row are dropped and counted in [`Parsed::rejected`].
pub fn read_dpts(path: impl AsRef<Path>) -> Result<Parsed<DptTracklet>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut order = Vec::new();
    let mut groups: HashMap<u64, Vec<DptPoint>> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let c = fields(path, line, raw, 7)?;
        let id: u64 = num(path, line, "track_id", c[0])?;
        let frame: Frame = num(path, line, "frame", c[1])?;
        let x: f64 = num(path, line, "x", c[2])?;
        let y: f64 = num(path, line, "y", c[3])?;
        let mut appearance = [0.0; 3];
        for (k, name) in ["r", "g", "b"].iter().enumerate() {
            let v: u8 = num(path, line, name, c[4 + k])?;
            appearance[k] = v as f64;
        }
        let group = groups.entry(id).or_insert_with(|| {
            order.push(id);
            Vec::new()
        });
        if let Some(prev) = group.last() {
            if frame != prev.frame + 1 {
                return Err(Error::TrackletGap {
                    id,
                    after: prev.frame,
                    next: frame,
                });
            }
        }
        group.push(DptPoint {
            frame,
            position: Point::new(x, y),
            appearance,
        });
    }
    let mut items = Vec::with_capacity(order.len());
    let mut rejected = 0;
    for id in order {
        let points = groups.remove(&id).unwrap();
        if points.len() < 2 {
            warn!(
                "{}: tracklet {id} has a single point, dropped",
                path.display()
            );
            rejected += 1;
            continue;
        }
        items.push(DptTracklet::new(id, points)?);
    }
    Ok(Parsed { items, rejected })
}

pub fn write_dpts(path: impl AsRef<Path>, tracklets: &[DptTracklet]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for t in tracklets {
        for p in t.points() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                t.id,
                p.frame,
                fmt_num(p.position.x),
                fmt_num(p.position.y),
                p.appearance[0].round() as u8,
                p.appearance[1].round() as u8,
                p.appearance[2].round() as u8
            )
            .unwrap();
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// MOT rows for a set of trajectories, sorted by frame then id. Detected boxes
/// carry confidence 1, interpolated and extrapolated boxes 0.5.
pub fn format_results(trajectories: &[Trajectory]) -> String {
    let mut rows: Vec<(Frame, u64, &TrajectoryBox)> = trajectories
        .iter()
        .flat_map(|t| t.boxes.iter().map(move |b| (b.frame, t.id, b)))
        .collect();
    rows.sort_by_key(|&(f, id, _)| (f, id));
    let mut out = String::new();
    for (frame, id, b) in rows {
        let bbox = b.bbox();
        let conf = match b.provenance {
            Provenance::Detected => "1",
            Provenance::Interpolated | Provenance::Extrapolated => "0.5",
        };
        writeln!(
            out,
            "{frame},{id},{},{},{},{},{conf},-1,-1,-1",
            fmt_num(bbox.left()),
            fmt_num(bbox.top()),
            fmt_num(b.width),
            fmt_num(b.height)
        )
        .unwrap();
    }
    out
}

pub fn write_results(path: impl AsRef<Path>, trajectories: &[Trajectory]) -> Result<()> {
    let path = path.as_ref();
    let mut seen = std::collections::HashSet::new();
    for t in trajectories {
        if !seen.insert(t.id) {
            return Err(Error::InvalidInput(format!(
                "duplicate trajectory id {}",
                t.id
            )));
        }
    }
    fs::write(path, format_results(trajectories)).map_err(|e| Error::io(path, e))
}

/// Reads ground truth or tracker results into trajectories grouped by id.
/// Rows with confidence below 1 are read back as interpolated boxes.
pub fn read_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut by_id: BTreeMap<u64, BTreeMap<Frame, TrajectoryBox>> = BTreeMap::new();
    for (line, r) in parse_mot(path, &text)? {
        if r.id < 0 {
            return Err(parse_error(
                path,
                line,
                format!("invalid trajectory id {}", r.id),
            ));
        }
        if !(r.width > 0.0 && r.height > 0.0) {
            return Err(parse_error(path, line, "nonpositive box extent"));
        }
        let id = r.id as u64;
        let b = TrajectoryBox {
            frame: r.frame,
            center: Point::new(r.bbox_left + r.width / 2.0, r.bbox_top + r.height / 2.0),
            width: r.width,
            height: r.height,
            provenance: if r.conf >= 1.0 {
                Provenance::Detected
            } else {
                Provenance::Interpolated
            },
        };
        if by_id.entry(id).or_default().insert(r.frame, b).is_some() {
            return Err(Error::DuplicateBox { frame: r.frame, id });
        }
    }
    Ok(by_id
        .into_iter()
        .map(|(id, boxes)| Trajectory {
            id,
            boxes: boxes.into_values().collect(),
            source_cluster: 0,
        })
        .collect())
}

pub fn read_config(path: impl AsRef<Path>) -> Result<TrackerConfig> {
    let path = path.as_ref();
    TrackerConfig::from_json(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file_with(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn detection_row_converts_to_center() {
        let f = file_with("1,-1,10,20,30,60,0.9,-1,-1,-1\n2,-1,0,0,10,10,-0.5,-1,-1,-1\n");
        let parsed = read_detections(f.path()).unwrap();
        assert_eq!(parsed.rejected, 0);
        let d = parsed.items[0];
        assert_eq!(d.frame, 1);
        assert_eq!(d.center, Point::new(25.0, 50.0));
        assert_eq!((d.width, d.height, d.confidence), (30.0, 60.0, 0.9));
        assert_eq!(parsed.items[1].confidence, -0.5);
    }

    #[test]
    fn malformed_detection_names_line() {
        let f = file_with("x,-1,10,20,30,60,0.9,-1,-1,-1\n");
        match read_detections(f.path()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn nonpositive_extent_counted() {
        let f = file_with("1,-1,10,20,0,60,0.9,-1,-1,-1\n1,-1,10,20,5,5,0.9,-1,-1,-1\n");
        let parsed = read_detections(f.path()).unwrap();
        assert_eq!(parsed.items.len(), 1);
        assert_eq!(parsed.rejected, 1);
    }

    #[test]
    fn dpt_rows_group_by_id() {
        let f = file_with("7,1,5.0,5.0,100,100,100\n7,2,6.0,5.0,100,100,100\n");
        let parsed = read_dpts(f.path()).unwrap();
        assert_eq!(parsed.items.len(), 1);
        assert_eq!(parsed.items[0].id, 7);
        assert_eq!(parsed.items[0].len(), 2);
    }

    #[test]
    fn dpt_gap_is_an_error() {
        let f = file_with("7,1,5.0,5.0,100,100,100\n7,3,6.0,5.0,100,100,100\n");
        let err = read_dpts(f.path()).unwrap_err();
        assert!(err.to_string().contains("gap in tracklet 7"), "{err}");
    }

    #[test]
    fn dpt_singleton_dropped_and_empty_file_ok() {
        let f = file_with("7,1,5.0,5.0,100,100,100\n");
        let parsed = read_dpts(f.path()).unwrap();
        assert!(parsed.items.is_empty());
        assert_eq!(parsed.rejected, 1);
        let f = file_with("");
        assert!(read_dpts(f.path()).unwrap().items.is_empty());
    }

    fn traj(id: u64, frame: Frame, provenance: Provenance) -> Trajectory {
        Trajectory {
            id,
            boxes: vec![TrajectoryBox {
                frame,
                center: Point::new(25.0, 50.0),
                width: 30.0,
                height: 60.0,
                provenance,
            }],
            source_cluster: 0,
        }
    }

    #[test]
    fn results_rows() {
        assert_eq!(
            format_results(&[traj(3, 1, Provenance::Detected)]),
            "1,3,10,20,30,60,1,-1,-1,-1\n"
        );
        assert_eq!(
            format_results(&[traj(3, 1, Provenance::Interpolated)]),
            "1,3,10,20,30,60,0.5,-1,-1,-1\n"
        );
        assert_eq!(format_results(&[]), "");
        let out = format_results(&[
            traj(5, 2, Provenance::Detected),
            traj(4, 2, Provenance::Detected),
            traj(9, 1, Provenance::Detected),
        ]);
        let keys: Vec<_> = out.lines().map(|l| &l[..3]).collect();
        assert_eq!(keys, vec!["1,9", "2,4", "2,5"]);
    }

    #[test]
    fn duplicate_ids_rejected_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let t = traj(1, 1, Provenance::Detected);
        assert!(write_results(dir.path().join("r.txt"), &[t.clone(), t]).is_err());
        assert!(write_results(dir.path().join("missing/r.txt"), &[]).is_err());
    }

    #[test]
    fn duplicate_frame_id_rejected_on_read() {
        let f = file_with("1,1,0,0,5,5,1,-1,-1,-1\n1,1,2,2,5,5,1,-1,-1,-1\n");
        assert!(matches!(
            read_trajectories(f.path()),
            Err(Error::DuplicateBox { frame: 1, id: 1 })
        ));
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(10.0), "10");
        assert_eq!(fmt_num(10.5), "10.5");
        assert_eq!(fmt_num(10.256), "10.26");
        assert_eq!(fmt_num(-0.001), "0");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn detected_boxes_survive_write_read(
                boxes in proptest::collection::vec(
                    (1u32..200, 1u64..20, -500.0f64..500.0, -500.0f64..500.0, 1.0f64..200.0, 1.0f64..200.0),
                    0..30,
                )
            ) {
                let mut by_id: BTreeMap<u64, BTreeMap<Frame, TrajectoryBox>> = BTreeMap::new();
                for (frame, id, x, y, w, h) in boxes {
                    let q = |v: f64| (v * 100.0).round() / 100.0;
                    let (w, h) = (q(w), q(h));
                    // keep the top-left corner on the 0.01 grid
                    let (l, t) = (q(x), q(y));
                    by_id.entry(id).or_default().insert(frame, TrajectoryBox {
                        frame,
                        center: Point::new(l + w / 2.0, t + h / 2.0),
                        width: w,
                        height: h,
                        provenance: Provenance::Detected,
                    });
                }
                let trajs: Vec<Trajectory> = by_id.into_iter()
                    .map(|(id, b)| Trajectory { id, boxes: b.into_values().collect(), source_cluster: 0 })
                    .collect();
                let f = file_with(&format_results(&trajs));
                let back = read_trajectories(f.path()).unwrap();
                prop_assert_eq!(back.len(), trajs.len());
                for (a, b) in trajs.iter().zip(&back) {
                    prop_assert_eq!(a.id, b.id);
                    for (x, y) in a.boxes.iter().zip(&b.boxes) {
                        prop_assert_eq!(x.frame, y.frame);
                        prop_assert_eq!(y.provenance, Provenance::Detected);
                        prop_assert!((x.bbox().left() - y.bbox().left()).abs() < 0.006);
                        prop_assert!((x.bbox().top() - y.bbox().top()).abs() < 0.006);
                        prop_assert!((x.width - y.width).abs() < 0.006);
                        prop_assert!((x.height - y.height).abs() < 0.006);
                    }
                }
            }
        }
    }
}
