//! Shared domain types.
//!
//! Coordinates come in two frames. Right after parsing, a [`Recording`] is in
//! the *world* frame: highD image coordinates converted to bounding-box centers
//! with the lateral axis pointing up. After
//! [`normalize_direction`](crate::ingest::normalize_direction) it is in the
//! *road* frame: `x` grows along the direction of travel, `y` grows to the
//! driver's left and lane 1 is the rightmost lane of each driving direction.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VehicleClass {
    Car,
    Truck,
}

impl VehicleClass {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "Car" | "car" => Some(VehicleClass::Car),
            "Truck" | "truck" => Some(VehicleClass::Truck),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Car => "Car",
            VehicleClass::Truck => "Truck",
        }
    }
}

/// highD driving direction. `Upper` (code 1) travels towards decreasing image
/// `x`, `Lower` (code 2) towards increasing image `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DrivingDirection {
    Upper,
    Lower,
}

impl DrivingDirection {
    pub fn from_code(code: i64) -> Result<Self> {
        match code {
            1 => Ok(DrivingDirection::Upper),
            2 => Ok(DrivingDirection::Lower),
            other => Err(Error::invalid(format!(
                "unknown driving direction code {other}"
            ))),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DrivingDirection::Upper => 1,
            DrivingDirection::Lower => 2,
        }
    }

    /// Whether the world-to-road transform for this direction is a point
    /// reflection (true) or the identity (false).
    pub fn is_mirrored(self) -> bool {
        self == DrivingDirection::Upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoordinateFrame {
    World,
    Road,
}

/// Maneuver classes. `Ndef` marks samples whose observation is too short to
/// decide; it never reaches training or evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Maneuver {
    Lcl,
    Flw,
    Lcr,
    Ndef,
}

impl Maneuver {
    /// The three classes the classifier and experts know about, in output order.
    pub const DEFINED: [Maneuver; 3] = [Maneuver::Lcl, Maneuver::Flw, Maneuver::Lcr];

    pub fn index(self) -> Option<usize> {
        match self {
            Maneuver::Lcl => Some(0),
            Maneuver::Flw => Some(1),
            Maneuver::Lcr => Some(2),
            Maneuver::Ndef => None,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::DEFINED.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Maneuver::Lcl => "LCL",
            Maneuver::Flw => "FLW",
            Maneuver::Lcr => "LCR",
            Maneuver::Ndef => "NDEF",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "LCL" => Some(Maneuver::Lcl),
            "FLW" => Some(Maneuver::Flw),
            "LCR" => Some(Maneuver::Lcr),
            "NDEF" => Some(Maneuver::Ndef),
            _ => None,
        }
    }
}

impl fmt::Display for Maneuver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Time until an event, or `Never` when no such event follows.
///
/// `Never` compares greater than every finite time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EventTime {
    At(f64),
    Never,
}

impl EventTime {
    pub fn is_never(self) -> bool {
        matches!(self, EventTime::Never)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            EventTime::At(t) => Some(t),
            EventTime::Never => None,
        }
    }

    pub fn le(self, other: EventTime) -> bool {
        matches!(self.cmp_time(other), Ordering::Less | Ordering::Equal)
    }

    pub fn lt(self, other: EventTime) -> bool {
        self.cmp_time(other) == Ordering::Less
    }

    pub fn cmp_time(self, other: EventTime) -> Ordering {
        match (self, other) {
            (EventTime::Never, EventTime::Never) => Ordering::Equal,
            (EventTime::Never, EventTime::At(_)) => Ordering::Greater,
            (EventTime::At(_), EventTime::Never) => Ordering::Less,
            (EventTime::At(a), EventTime::At(b)) => a.total_cmp(&b),
        }
    }
}

impl fmt::Display for EventTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventTime::At(t) => write!(f, "{t}"),
            EventTime::Never => f.write_str("none"),
        }
    }
}

impl std::str::FromStr for EventTime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(EventTime::Never);
        }
        s.parse::<f64>()
            .map(EventTime::At)
            .map_err(|_| Error::invalid(format!("bad event time `{s}`")))
    }
}

/// The eight surrounding-vehicle slots, in highD column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NeighborSlot {
    EgoPreceding,
    EgoFollowing,
    LeftPreceding,
    LeftAlongside,
    LeftFollowing,
    RightPreceding,
    RightAlongside,
    RightFollowing,
}

impl NeighborSlot {
    pub const ALL: [NeighborSlot; 8] = [
        NeighborSlot::EgoPreceding,
        NeighborSlot::EgoFollowing,
        NeighborSlot::LeftPreceding,
        NeighborSlot::LeftAlongside,
        NeighborSlot::LeftFollowing,
        NeighborSlot::RightPreceding,
        NeighborSlot::RightAlongside,
        NeighborSlot::RightFollowing,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NeighborSlot::EgoPreceding => "ego_preceding",
            NeighborSlot::EgoFollowing => "ego_following",
            NeighborSlot::LeftPreceding => "left_preceding",
            NeighborSlot::LeftAlongside => "left_alongside",
            NeighborSlot::LeftFollowing => "left_following",
            NeighborSlot::RightPreceding => "right_preceding",
            NeighborSlot::RightAlongside => "right_alongside",
            NeighborSlot::RightFollowing => "right_following",
        }
    }

    /// The slot seen from a left-right mirrored scene.
    pub fn mirrored(self) -> Self {
        match self {
            NeighborSlot::LeftPreceding => NeighborSlot::RightPreceding,
            NeighborSlot::LeftAlongside => NeighborSlot::RightAlongside,
            NeighborSlot::LeftFollowing => NeighborSlot::RightFollowing,
            NeighborSlot::RightPreceding => NeighborSlot::LeftPreceding,
            NeighborSlot::RightAlongside => NeighborSlot::LeftAlongside,
            NeighborSlot::RightFollowing => NeighborSlot::LeftFollowing,
            other => other,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// One vehicle's kinematic state at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSample {
    pub frame: u32,
    pub vehicle_id: u32,
    /// Bounding-box center, m.
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    /// Lateral jerk, derived from `ay`.
    pub jy: f64,
    pub lane_id: u32,
    /// Signed lateral offset from the current lane center, m.
    pub d_y_cl: f64,
    pub front_sight: f64,
    pub back_sight: f64,
    /// Neighbor ids as recorded in the source file (0 = none), in
    /// [`NeighborSlot`] order. Kept for faithful re-serialization only.
    pub source_neighbors: [u32; 8],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub vehicle_id: u32,
    pub class: VehicleClass,
    pub direction: DrivingDirection,
    /// Extent along the road (highD `width`), m.
    pub length: f64,
    /// Lateral extent (highD `height`), m.
    pub width: f64,
    pub samples: Vec<TrackSample>,
}

impl Track {
    pub fn sample_at_frame(&self, frame: u32) -> Option<&TrackSample> {
        let first = self.samples.first()?.frame;
        let idx = frame.checked_sub(first)? as usize;
        match self.samples.get(idx) {
            Some(s) if s.frame == frame => Some(s),
            _ => self.samples.iter().find(|s| s.frame == frame),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleMeta {
    pub class: VehicleClass,
    pub direction: DrivingDirection,
    pub initial_frame: u32,
    pub final_frame: u32,
}

/// Lane markings of one driving direction in the road frame, ascending in `y`
/// (rightmost marking first). Lane `k` lies between markings `k-1` and `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneGeometry {
    pub markings: Vec<f64>,
}

impl LaneGeometry {
    pub fn new(mut markings: Vec<f64>) -> Result<Self> {
        if markings.len() < 2 {
            return Err(Error::invalid(
                "a driving direction needs at least two lane markings",
            ));
        }
        markings.sort_by(f64::total_cmp);
        if markings.windows(2).any(|w| w[1] - w[0] <= 0.0) {
            return Err(Error::invalid("lane markings must be distinct"));
        }
        Ok(Self { markings })
    }

    pub fn lane_count(&self) -> usize {
        self.markings.len() - 1
    }

    pub fn contains_lane(&self, lane: u32) -> bool {
        lane >= 1 && (lane as usize) <= self.lane_count()
    }

    pub fn lane_center(&self, lane: u32) -> Option<f64> {
        self.contains_lane(lane).then(|| {
            let k = lane as usize;
            0.5 * (self.markings[k - 1] + self.markings[k])
        })
    }

    pub fn lane_width(&self, lane: u32) -> Option<f64> {
        self.contains_lane(lane).then(|| {
            let k = lane as usize;
            self.markings[k] - self.markings[k - 1]
        })
    }

    /// Marking between `lane` and `lane + 1`.
    pub fn left_marking(&self, lane: u32) -> Option<f64> {
        self.contains_lane(lane)
            .then(|| self.markings[lane as usize])
    }

    /// Lane containing lateral position `y`, if on the road.
    pub fn lane_at(&self, y: f64) -> Option<u32> {
        let m = &self.markings;
        if y < m[0] || y > m[m.len() - 1] {
            return None;
        }
        let k = m.partition_point(|&mk| mk <= y);
        Some(k.clamp(1, m.len() - 1) as u32)
    }

    /// Geometry seen from a left-right mirrored road.
    pub fn mirrored(&self) -> Self {
        let mut markings: Vec<f64> = self.markings.iter().map(|m| -m).collect();
        markings.sort_by(f64::total_cmp);
        Self { markings }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingMeta {
    pub id: u32,
    pub frame_rate: f64,
    /// Longitudinal start of the recorded road section in image `x`, m.
    pub segment_start: f64,
    pub segment_length: f64,
    /// Lateral marking offsets as stored in the file (image `y`, ascending), m.
    pub upper_markings: Vec<f64>,
    pub lower_markings: Vec<f64>,
    pub vehicles: BTreeMap<u32, VehicleMeta>,
}

impl RecordingMeta {
    pub fn upper_lane_count(&self) -> usize {
        self.upper_markings.len().saturating_sub(1)
    }

    pub fn lower_lane_count(&self) -> usize {
        self.lower_markings.len().saturating_sub(1)
    }

    pub fn lane_count(&self, direction: DrivingDirection) -> usize {
        match direction {
            DrivingDirection::Upper => self.upper_lane_count(),
            DrivingDirection::Lower => self.lower_lane_count(),
        }
    }

    /// Center of the longitudinal segment in image `x`.
    pub fn segment_center(&self) -> f64 {
        self.segment_start + 0.5 * self.segment_length
    }

    /// Road-frame lane geometry of one driving direction.
    pub fn road_geometry(&self, direction: DrivingDirection) -> Result<LaneGeometry> {
        match direction {
            DrivingDirection::Upper => LaneGeometry::new(self.upper_markings.clone()),
            DrivingDirection::Lower => {
                LaneGeometry::new(self.lower_markings.iter().map(|m| -m).collect())
            }
        }
    }

    /// Maps a highD lane id to the road-frame lane number of `direction`.
    ///
    /// highD numbers lanes top to bottom across the image, starting at 2 for
    /// the upper carriageway and continuing after one gap id for the lower one.
    pub fn road_lane(&self, direction: DrivingDirection, raw_lane: u32) -> Option<u32> {
        let n_upper = self.upper_lane_count() as u32;
        let n_lower = self.lower_lane_count() as u32;
        match direction {
            DrivingDirection::Upper => {
                (raw_lane >= 2 && raw_lane < 2 + n_upper).then(|| raw_lane - 1)
            }
            DrivingDirection::Lower => {
                let first = n_upper + 3;
                (raw_lane >= first && raw_lane < first + n_lower)
                    .then(|| n_lower - (raw_lane - first))
            }
        }
    }

    /// Inverse of [`road_lane`](Self::road_lane).
    pub fn raw_lane(&self, direction: DrivingDirection, road_lane: u32) -> Option<u32> {
        let n_upper = self.upper_lane_count() as u32;
        let n_lower = self.lower_lane_count() as u32;
        match direction {
            DrivingDirection::Upper => {
                (road_lane >= 1 && road_lane <= n_upper).then(|| road_lane + 1)
            }
            DrivingDirection::Lower => {
                (road_lane >= 1 && road_lane <= n_lower).then(|| n_upper + 3 + n_lower - road_lane)
            }
        }
    }

    /// World-frame (`y` up) lane center and width for a highD lane id.
    pub fn world_lane_center(
        &self,
        direction: DrivingDirection,
        raw_lane: u32,
    ) -> Option<(f64, f64)> {
        let road = self.road_lane(direction, raw_lane)?;
        let geo = self.road_geometry(direction).ok()?;
        let center = geo.lane_center(road)?;
        let width = geo.lane_width(road)?;
        // road y = -world y for the upper direction, = world y for the lower one
        let world = if direction.is_mirrored() {
            -center
        } else {
            center
        };
        Some((world, width))
    }
}

/// A parsed recording: metadata, every vehicle's track, and the subset of
/// vehicles that are prediction targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub meta: RecordingMeta,
    pub tracks: Vec<Track>,
    pub targets: BTreeSet<u32>,
    pub frame: CoordinateFrame,
}

impl Recording {
    pub fn track(&self, vehicle_id: u32) -> Option<&Track> {
        self.tracks
            .binary_search_by_key(&vehicle_id, |t| t.vehicle_id)
            .ok()
            .map(|i| &self.tracks[i])
    }

    pub fn target_tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks
            .iter()
            .filter(|t| self.targets.contains(&t.vehicle_id))
    }

    /// Lane geometry in the recording's current coordinate frame.
    pub fn geometry(&self, direction: DrivingDirection) -> Result<LaneGeometry> {
        self.meta.road_geometry(direction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarkingType {
    Dashed,
    Solid,
}

impl MarkingType {
    pub fn crossable(self) -> bool {
        self == MarkingType::Dashed
    }
}

/// Relation of the target to the nearest vehicle in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborRelation {
    /// Absolute longitudinal center distance, m.
    pub distance: f64,
    /// Neighbor longitudinal velocity minus target velocity, m/s.
    pub delta_v: f64,
    pub present: bool,
    pub vehicle_id: Option<u32>,
}

impl NeighborRelation {
    pub fn absent(max_range: f64) -> Self {
        Self {
            distance: max_range,
            delta_v: 0.0,
            present: false,
            vehicle_id: None,
        }
    }
}

/// Environment model of one target at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneContext {
    pub slots: [NeighborRelation; 8],
    pub marking_left: MarkingType,
    pub marking_right: MarkingType,
    /// Vehicles per km and lane in the target's driving direction.
    pub traffic_density: f64,
    pub front_sight: f64,
    pub back_sight: f64,
}

impl SceneContext {
    pub fn slot(&self, slot: NeighborSlot) -> &NeighborRelation {
        &self.slots[slot.index()]
    }
}

/// Times to the next left and right lane-change crossing and the remaining
/// observation time, all in seconds from the sample's instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeToEvents {
    pub lcl: EventTime,
    pub lcr: EventTime,
    pub observed: f64,
}

/// Identifies a vehicle track across recordings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrackKey {
    pub recording: u32,
    pub vehicle: u32,
}

impl fmt::Display for TrackKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.recording, self.vehicle)
    }
}

/// One target frame with features, label, timing and ground-truth future.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: u64,
    pub track: TrackKey,
    pub frame: u32,
    pub time: f64,
    pub features: Vec<f64>,
    pub label: Maneuver,
    pub times: TimeToEvents,
    /// 1-based fold, 0 while unassigned.
    pub fold: u8,
    pub traffic_density: f64,
    /// Passes the sight-distance rule; only admissible samples are used for
    /// training and evaluation.
    pub admissible: bool,
    pub d_y_cl: f64,
    pub v_y: f64,
    /// Lane-center-relative lateral position on the horizon grid, `None`
    /// where the track ends first.
    pub future: Vec<Option<f64>>,
}

impl LabeledSample {
    /// Current lateral position in the same lane-relative frame as `future`.
    pub fn current_offset(&self) -> f64 {
        self.d_y_cl
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LaneChangeDirection {
    Left,
    Right,
}

impl LaneChangeDirection {
    pub fn maneuver(self) -> Maneuver {
        match self {
            LaneChangeDirection::Left => Maneuver::Lcl,
            LaneChangeDirection::Right => Maneuver::Lcr,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            LaneChangeDirection::Left => LaneChangeDirection::Right,
            LaneChangeDirection::Right => LaneChangeDirection::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LaneChangeDirection::Left => "left",
            LaneChangeDirection::Right => "right",
        }
    }
}

/// Begin/end of a lane change and the peak lateral speed in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeBoundaries {
    pub t_begin: f64,
    pub t_end: f64,
    pub duration: f64,
    pub max_abs_vy: f64,
    /// The condition did not release before an end of the track.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeEvent {
    pub track: TrackKey,
    pub direction: LaneChangeDirection,
    /// Instant the vehicle center crosses the marking, s.
    pub t_cross: f64,
    /// Index of the first sample in the new lane.
    pub frame_index: usize,
    pub from_lane: u32,
    pub to_lane: u32,
    pub boundaries: Option<LaneChangeBoundaries>,
    pub traffic_density: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    FrameOrder,
    LaneOutOfRange,
    NonFinite(&'static str),
    LaneOffsetTooLarge,
    UnknownVehicle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub vehicle_id: u32,
    pub frame: u32,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match &self.kind {
            ViolationKind::FrameOrder => "frame order".to_string(),
            ViolationKind::LaneOutOfRange => "lane id out of range".to_string(),
            ViolationKind::NonFinite(field) => format!("non-finite {field}"),
            ViolationKind::LaneOffsetTooLarge => {
                "lane-center offset exceeds lane width".to_string()
            }
            ViolationKind::UnknownVehicle => "vehicle missing from metadata".to_string(),
        };
        write!(
            f,
            "vehicle {} frame {}: {}",
            self.vehicle_id, self.frame, what
        )
    }
}

/// Checks structural consistency of a recording. Returns every violation
/// found; an empty list means the recording is valid.
pub fn validate(recording: &Recording) -> Vec<Violation> {
    let mut out = Vec::new();
    for track in &recording.tracks {
        let id = track.vehicle_id;
        if !recording.meta.vehicles.contains_key(&id) {
            out.push(Violation {
                vehicle_id: id,
                frame: track.samples.first().map_or(0, |s| s.frame),
                kind: ViolationKind::UnknownVehicle,
            });
        }
        let geometry = match recording.frame {
            CoordinateFrame::Road => recording.meta.road_geometry(track.direction).ok(),
            CoordinateFrame::World => None,
        };
        let mut prev: Option<u32> = None;
        for s in &track.samples {
            if let Some(p) = prev {
                if s.frame <= p {
                    out.push(Violation {
                        vehicle_id: id,
                        frame: s.frame,
                        kind: ViolationKind::FrameOrder,
                    });
                }
            }
            prev = Some(s.frame);

            let fields = [
                ("x", s.x),
                ("y", s.y),
                ("vx", s.vx),
                ("vy", s.vy),
                ("ax", s.ax),
                ("ay", s.ay),
            ];
            if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
                out.push(Violation {
                    vehicle_id: id,
                    frame: s.frame,
                    kind: ViolationKind::NonFinite(name),
                });
                continue;
            }

            let width = match recording.frame {
                CoordinateFrame::World => recording
                    .meta
                    .world_lane_center(track.direction, s.lane_id)
                    .map(|(_, w)| w),
                CoordinateFrame::Road => geometry.as_ref().and_then(|g| g.lane_width(s.lane_id)),
            };
            match width {
                None => out.push(Violation {
                    vehicle_id: id,
                    frame: s.frame,
                    kind: ViolationKind::LaneOutOfRange,
                }),
                Some(w) => {
                    if !(s.d_y_cl.abs() <= w) {
                        out.push(Violation {
                            vehicle_id: id,
                            frame: s.frame,
                            kind: ViolationKind::LaneOffsetTooLarge,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Lateral jerk from lateral acceleration: central differences (one-sided at
/// the ends) followed by a centered 5-sample moving average that shrinks at
/// the track ends.
pub fn derive_lateral_jerk(frames: &[u32], ay: &[f64], frame_rate: f64) -> Vec<f64> {
    let n = ay.len().min(frames.len());
    if n < 2 {
        return vec![0.0; n];
    }
    let dt = |a: usize, b: usize| (frames[b] as f64 - frames[a] as f64) / frame_rate;
    let raw: Vec<f64> = (0..n)
        .map(|k| {
            let (lo, hi) = match k {
                0 => (0, 1),
                k if k == n - 1 => (n - 2, n - 1),
                k => (k - 1, k + 1),
            };
            (ay[hi] - ay[lo]) / dt(lo, hi)
        })
        .collect();
    (0..n)
        .map(|k| {
            let half = 2.min(k).min(n - 1 - k);
            let window = &raw[k - half..=k + half];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_recording() -> Recording {
        let mut vehicles = BTreeMap::new();
        vehicles.insert(
            1,
            VehicleMeta {
                class: VehicleClass::Car,
                direction: DrivingDirection::Lower,
                initial_frame: 1,
                final_frame: 3,
            },
        );
        let meta = RecordingMeta {
            id: 1,
            frame_rate: 25.0,
            segment_start: 0.0,
            segment_length: 400.0,
            upper_markings: vec![10.0, 13.5, 17.0],
            lower_markings: vec![20.0, 23.5, 27.0],
            vehicles,
        };
        let samples = (1..=3)
            .map(|f| TrackSample {
                frame: f,
                vehicle_id: 1,
                x: 10.0 + f as f64,
                y: 0.2,
                vx: 30.0,
                vy: 0.0,
                ax: 0.0,
                ay: 0.0,
                jy: 0.0,
                lane_id: 1,
                d_y_cl: 0.2,
                front_sight: 300.0,
                back_sight: 100.0,
                source_neighbors: [0; 8],
            })
            .collect();
        Recording {
            meta,
            tracks: vec![Track {
                vehicle_id: 1,
                class: VehicleClass::Car,
                direction: DrivingDirection::Lower,
                length: 4.5,
                width: 1.8,
                samples,
            }],
            targets: [1].into_iter().collect(),
            frame: CoordinateFrame::Road,
        }
    }

    #[test]
    fn valid_recording_has_empty_report() {
        assert!(validate(&tiny_recording()).is_empty());
    }

    #[test]
    fn lane_zero_is_one_violation() {
        let mut rec = tiny_recording();
        rec.tracks[0].samples[1].lane_id = 0;
        let report = validate(&rec);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].vehicle_id, 1);
        assert_eq!(report[0].frame, 2);
        assert_eq!(report[0].kind, ViolationKind::LaneOutOfRange);
    }

    #[test]
    fn non_monotone_frames_flagged() {
        let mut rec = tiny_recording();
        rec.tracks[0].samples[2].frame = 2;
        let report = validate(&rec);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].kind, ViolationKind::FrameOrder);
    }

    #[test]
    fn never_is_greater_than_any_time() {
        assert!(EventTime::At(1e300).lt(EventTime::Never));
        assert!(EventTime::Never.le(EventTime::Never));
        assert!(!EventTime::Never.lt(EventTime::Never));
        assert!(EventTime::At(2.0).le(EventTime::At(2.0)));
        assert_eq!("none".parse::<EventTime>().unwrap(), EventTime::Never);
        assert_eq!("2.5".parse::<EventTime>().unwrap(), EventTime::At(2.5));
    }

    #[test]
    fn raw_lane_mapping_round_trips() {
        let meta = tiny_recording().meta;
        // upper: raw 2,3 -> road 1,2 ; lower: raw 5,6 -> road 2,1
        assert_eq!(meta.road_lane(DrivingDirection::Upper, 2), Some(1));
        assert_eq!(meta.road_lane(DrivingDirection::Upper, 3), Some(2));
        assert_eq!(meta.road_lane(DrivingDirection::Lower, 5), Some(2));
        assert_eq!(meta.road_lane(DrivingDirection::Lower, 6), Some(1));
        assert_eq!(meta.road_lane(DrivingDirection::Lower, 4), None);
        for dir in [DrivingDirection::Upper, DrivingDirection::Lower] {
            for lane in 1..=2 {
                let raw = meta.raw_lane(dir, lane).unwrap();
                assert_eq!(meta.road_lane(dir, raw), Some(lane));
            }
        }
    }

    #[test]
    fn lane_lookup_by_position() {
        let g = LaneGeometry::new(vec![0.0, 3.5, 7.0, 10.5]).unwrap();
        assert_eq!(g.lane_at(1.0), Some(1));
        assert_eq!(g.lane_at(3.6), Some(2));
        assert_eq!(g.lane_at(10.5), Some(3));
        assert_eq!(g.lane_at(-0.1), None);
        assert_eq!(g.lane_center(2), Some(5.25));
        assert_eq!(g.mirrored().markings, vec![-10.5, -7.0, -3.5, 0.0]);
    }

    #[test]
    fn jerk_of_linear_acceleration_is_constant() {
        let frames: Vec<u32> = (1..=50).collect();
        let ay: Vec<f64> = frames.iter().map(|&f| 0.3 * f as f64 / 25.0).collect();
        let jy = derive_lateral_jerk(&frames, &ay, 25.0);
        for j in jy {
            assert!((j - 0.3).abs() < 1e-9);
        }
    }
}
