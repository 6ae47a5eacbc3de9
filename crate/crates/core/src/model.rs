//! Domain types shared by every stage of the tracker.
//!
//! Frames are discrete indices. Positions are image pixels with the origin in
//! the top-left corner. All types are plain values and are `Send + Sync`.

use std::collections::BTreeSet;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Frame = u32;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ZERO: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Point {
    fn add_assign(&mut self, rhs: Point) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

/// Axis-aligned box given by its center and extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub center: Point,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(center: Point, width: f64, height: f64) -> Self {
        BBox {
            center,
            width,
            height,
        }
    }

    pub fn left(&self) -> f64 {
        self.center.x - self.width / 2.0
    }

    pub fn top(&self) -> f64 {
        self.center.y - self.height / 2.0
    }

    pub fn right(&self) -> f64 {
        self.center.x + self.width / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.center.y + self.height / 2.0
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Closed containment test; points on the border count as inside.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.left() && p.x <= self.right() && p.y >= self.top() && p.y <= self.bottom()
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = (self.right().min(other.right()) - self.left().max(other.left())).max(0.0);
        let ih = (self.bottom().min(other.bottom()) - self.top().max(other.top())).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: Frame,
    pub center: Point,
    pub width: f64,
    pub height: f64,
    /// Raw detector score; the scale is detector specific.
    pub confidence: f64,
}

impl Detection {
    pub fn new(
        frame: Frame,
        center: Point,
        width: f64,
        height: f64,
        confidence: f64,
    ) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::InvalidInput(format!(
                "detection at frame {frame} has nonpositive extent {width}x{height}"
            )));
        }
        Ok(Detection {
            frame,
            center,
            width,
            height,
            confidence,
        })
    }

    pub fn bbox(&self) -> BBox {
        BBox::new(self.center, self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DptPoint {
    pub frame: Frame,
    pub position: Point,
    /// Mean patch color, one value per channel in `[0, 255]`.
    pub appearance: [f64; 3],
}

/// A dense point tracklet: one point per frame over a run of consecutive frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DptTracklet {
    pub id: u64,
    points: Vec<DptPoint>,
}

impl DptTracklet {
    pub fn new(id: u64, points: Vec<DptPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "tracklet {id} has {} point(s), need at least 2",
                points.len()
            )));
        }
        for w in points.windows(2) {
            if w[1].frame != w[0].frame + 1 {
                return Err(Error::TrackletGap {
                    id,
                    after: w[0].frame,
                    next: w[1].frame,
                });
            }
        }
        if let Some(p) = points
            .iter()
            .find(|p| p.appearance.iter().any(|c| !(0.0..=255.0).contains(c)))
        {
            return Err(Error::InvalidInput(format!(
                "tracklet {id} has appearance {:?} outside [0, 255] at frame {}",
                p.appearance, p.frame
            )));
        }
        Ok(DptTracklet { id, points })
    }

    pub fn points(&self) -> &[DptPoint] {
        &self.points
    }

    pub fn first(&self) -> &DptPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &DptPoint {
        &self.points[self.points.len() - 1]
    }

    pub fn first_frame(&self) -> Frame {
        self.first().frame
    }

    pub fn last_frame(&self) -> Frame {
        self.last().frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point_at(&self, frame: Frame) -> Option<&DptPoint> {
        let offset = frame.checked_sub(self.first_frame())? as usize;
        self.points.get(offset)
    }

    /// The part of the tracklet inside `[first, last]`, if at least two
    /// points remain.
    pub fn clipped(&self, first: Frame, last: Frame) -> Option<DptTracklet> {
        let points: Vec<_> = self
            .points
            .iter()
            .filter(|p| p.frame >= first && p.frame <= last)
            .copied()
            .collect();
        (points.len() >= 2).then_some(DptTracklet {
            id: self.id,
            points,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    /// Dense point tracklets.
    Low,
    /// Detections.
    Mid,
}

/// A feature referenced by a [`FeatureTrack`]: an index into the feature list
/// the track was built from, with the frames the feature covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub feature: usize,
    pub first_frame: Frame,
    pub last_frame: Frame,
}

/// Features of one category linked in time. Members are ordered and never
/// share a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTrack {
    pub id: usize,
    pub category: Category,
    members: Vec<Member>,
}

impl FeatureTrack {
    pub fn new(id: usize, category: Category, members: Vec<Member>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidInput(format!("feature track {id} is empty")));
        }
        for m in &members {
            if m.first_frame > m.last_frame {
                return Err(Error::InvalidInput(format!(
                    "feature {} in track {id} ends before it starts",
                    m.feature
                )));
            }
        }
        for w in members.windows(2) {
            if w[1].first_frame <= w[0].last_frame {
                return Err(Error::InvalidInput(format!(
                    "features {} and {} in track {id} overlap in time",
                    w[0].feature, w[1].feature
                )));
            }
        }
        Ok(FeatureTrack {
            id,
            category,
            members,
        })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    /// Every frame at which the track has a member, ascending.
    pub fn frames(&self) -> impl Iterator<Item = Frame> + '_ {
        self.members
            .iter()
            .flat_map(|m| m.first_frame..=m.last_frame)
    }

    pub fn frame_count(&self) -> usize {
        self.members
            .iter()
            .map(|m| (m.last_frame - m.first_frame + 1) as usize)
            .sum()
    }

    pub fn covers(&self, frame: Frame) -> bool {
        self.member_at(frame).is_some()
    }

    pub fn member_at(&self, frame: Frame) -> Option<&Member> {
        let idx = self.members.partition_point(|m| m.last_frame < frame);
        self.members.get(idx).filter(|m| m.first_frame <= frame)
    }
}

/// First and last frame of a track.
pub fn track_frame_span(track: &FeatureTrack) -> (Frame, Frame) {
    let first = track.members[0].first_frame;
    let last = track.members[track.members.len() - 1].last_frame;
    (first, last)
}

/// Frames at which both tracks have a member.
pub fn common_frames(a: &FeatureTrack, b: &FeatureTrack) -> BTreeSet<Frame> {
    a.frames().filter(|&f| b.covers(f)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Detected,
    Interpolated,
    Extrapolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBox {
    pub frame: Frame,
    pub center: Point,
    pub width: f64,
    pub height: f64,
    pub provenance: Provenance,
}

impl TrajectoryBox {
    pub fn bbox(&self) -> BBox {
        BBox::new(self.center, self.width, self.height)
    }
}

/// Final per-person output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u64,
    pub boxes: Vec<TrajectoryBox>,
    pub source_cluster: usize,
}

impl Trajectory {
    pub fn first_frame(&self) -> Option<Frame> {
        self.boxes.first().map(|b| b.frame)
    }

    pub fn last_frame(&self) -> Option<Frame> {
        self.boxes.last().map(|b| b.frame)
    }

    pub fn box_at(&self, frame: Frame) -> Option<&TrajectoryBox> {
        self.boxes
            .binary_search_by_key(&frame, |b| b.frame)
            .ok()
            .map(|i| &self.boxes[i])
    }

    pub fn detected_count(&self) -> usize {
        self.boxes
            .iter()
            .filter(|b| b.provenance == Provenance::Detected)
            .count()
    }

    /// Strictly increasing frames and at least one detected box.
    pub fn is_well_formed(&self) -> bool {
        self.boxes.windows(2).all(|w| w[0].frame < w[1].frame) && self.detected_count() > 0
    }
}
