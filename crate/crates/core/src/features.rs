//! Environment model, traffic density, classifier features and lane-change
//! detection.

use serde::{Deserialize, Serialize};

use crate::data_model::{
    LaneChangeBoundaries, LaneChangeDirection, LaneChangeEvent, LaneGeometry, MarkingType,
    NeighborRelation, NeighborSlot, SceneContext, Track, TrackKey, TrackSample,
};
use crate::error::{Error, Result};
use crate::ingest::SensorModel;

/// Minimal per-vehicle state needed to build an environment model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotVehicle {
    pub id: u32,
    pub x: f64,
    pub vx: f64,
    pub lane_id: u32,
    pub length: f64,
    pub front_sight: f64,
    pub back_sight: f64,
}

/// All vehicles of one driving direction at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSnapshot {
    pub frame: u32,
    pub lane_count: usize,
    pub segment_length: f64,
    pub vehicles: Vec<SnapshotVehicle>,
}

/// Slot a neighbor falls into, seen from `ego`, if any.
pub fn classify_neighbor(ego: &SnapshotVehicle, other: &SnapshotVehicle) -> Option<NeighborSlot> {
    let dx = other.x - ego.x;
    let overlap = dx.abs() < 0.5 * (ego.length + other.length);
    let lane_delta = other.lane_id as i64 - ego.lane_id as i64;
    match lane_delta {
        0 if dx >= 0.0 => Some(NeighborSlot::EgoPreceding),
        0 => Some(NeighborSlot::EgoFollowing),
        1 if overlap => Some(NeighborSlot::LeftAlongside),
        1 if dx > 0.0 => Some(NeighborSlot::LeftPreceding),
        1 => Some(NeighborSlot::LeftFollowing),
        -1 if overlap => Some(NeighborSlot::RightAlongside),
        -1 if dx > 0.0 => Some(NeighborSlot::RightPreceding),
        -1 => Some(NeighborSlot::RightFollowing),
        _ => None,
    }
}

/// Fills the eight neighbor slots with the nearest vehicle of each slot.
/// Empty slots and neighbors beyond the sensor range get the default
/// relation `(max_range, 0)`.
pub fn build_environment_model(
    snapshot: &FrameSnapshot,
    target_id: u32,
    sensor: &SensorModel,
) -> Result<SceneContext> {
    let ego = snapshot
        .vehicles
        .iter()
        .find(|v| v.id == target_id)
        .ok_or_else(|| {
            Error::invalid(format!(
                "target {target_id} absent from snapshot of frame {}",
                snapshot.frame
            ))
        })?;
    let mut best: [Option<(f64, u32, f64)>; 8] = [None; 8];
    for other in snapshot.vehicles.iter().filter(|v| v.id != target_id) {
        let Some(slot) = classify_neighbor(ego, other) else {
            continue;
        };
        let dist = (other.x - ego.x).abs();
        let entry = &mut best[slot.index()];
        let better = match entry {
            None => true,
            Some((d, id, _)) => dist < *d || (dist == *d && other.id < *id),
        };
        if better {
            *entry = Some((dist, other.id, other.vx - ego.vx));
        }
    }
    let slots = best.map(|b| match b {
        Some((distance, id, delta_v)) if distance <= sensor.max_range => NeighborRelation {
            distance,
            delta_v,
            present: true,
            vehicle_id: Some(id),
        },
        _ => NeighborRelation::absent(sensor.max_range),
    });
    let lanes = snapshot.lane_count as u32;
    Ok(SceneContext {
        slots,
        marking_left: if ego.lane_id < lanes {
            MarkingType::Dashed
        } else {
            MarkingType::Solid
        },
        marking_right: if ego.lane_id > 1 {
            MarkingType::Dashed
        } else {
            MarkingType::Solid
        },
        traffic_density: compute_traffic_density(snapshot)?,
        front_sight: ego.front_sight,
        back_sight: ego.back_sight,
    })
}

/// Vehicles per km and lane.
pub fn traffic_density(vehicles: usize, segment_length: f64, lane_count: usize) -> Result<f64> {
    if lane_count == 0 {
        return Err(Error::invalid("traffic density needs at least one lane"));
    }
    if !(segment_length > 0.0) {
        return Err(Error::invalid(format!(
            "traffic density needs a positive segment length, got {segment_length}"
        )));
    }
    Ok(vehicles as f64 / (segment_length / 1000.0 * lane_count as f64))
}

pub fn compute_traffic_density(snapshot: &FrameSnapshot) -> Result<f64> {
    traffic_density(
        snapshot.vehicles.len(),
        snapshot.segment_length,
        snapshot.lane_count,
    )
}

/// One entry of a feature schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    LaneOffset,
    LateralVelocity,
    LateralAcceleration,
    LateralJerk,
    LongitudinalVelocity,
    LaneId,
    LeftMarkingCrossable,
    RightMarkingCrossable,
    TrafficDensity,
    NeighborDistance(NeighborSlot),
    NeighborDeltaV(NeighborSlot),
}

impl FeatureKind {
    pub fn name(self) -> String {
        match self {
            FeatureKind::LaneOffset => "d_y_cl".into(),
            FeatureKind::LateralVelocity => "v_y".into(),
            FeatureKind::LateralAcceleration => "a_y".into(),
            FeatureKind::LateralJerk => "j_y".into(),
            FeatureKind::LongitudinalVelocity => "v_x".into(),
            FeatureKind::LaneId => "lane_id".into(),
            FeatureKind::LeftMarkingCrossable => "marking_left".into(),
            FeatureKind::RightMarkingCrossable => "marking_right".into(),
            FeatureKind::TrafficDensity => "traffic_density".into(),
            FeatureKind::NeighborDistance(s) => format!("{}.distance", s.name()),
            FeatureKind::NeighborDeltaV(s) => format!("{}.dv", s.name()),
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            FeatureKind::LaneOffset | FeatureKind::NeighborDistance(_) => "m",
            FeatureKind::LateralVelocity
            | FeatureKind::LongitudinalVelocity
            | FeatureKind::NeighborDeltaV(_) => "m/s",
            FeatureKind::LateralAcceleration => "m/s^2",
            FeatureKind::LateralJerk => "m/s^3",
            FeatureKind::LaneId
            | FeatureKind::LeftMarkingCrossable
            | FeatureKind::RightMarkingCrossable => "1",
            FeatureKind::TrafficDensity => "veh/(km*lane)",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        let simple = [
            FeatureKind::LaneOffset,
            FeatureKind::LateralVelocity,
            FeatureKind::LateralAcceleration,
            FeatureKind::LateralJerk,
            FeatureKind::LongitudinalVelocity,
            FeatureKind::LaneId,
            FeatureKind::LeftMarkingCrossable,
            FeatureKind::RightMarkingCrossable,
            FeatureKind::TrafficDensity,
        ];
        if let Some(k) = simple.into_iter().find(|k| k.name() == name) {
            return Some(k);
        }
        let (slot, field) = name.split_once('.')?;
        let slot = NeighborSlot::from_name(slot)?;
        match field {
            "distance" => Some(FeatureKind::NeighborDistance(slot)),
            "dv" => Some(FeatureKind::NeighborDeltaV(slot)),
            _ => None,
        }
    }
}

/// Ordered list of features fed to the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureKind>,
}

impl Default for FeatureSchema {
    /// 23 values: lane offset, lateral velocity and acceleration,
    /// longitudinal velocity, lane id, two marking flags and distance plus
    /// relative velocity for each of the eight neighbor slots.
    fn default() -> Self {
        let mut features = vec![
            FeatureKind::LaneOffset,
            FeatureKind::LateralVelocity,
            FeatureKind::LateralAcceleration,
            FeatureKind::LongitudinalVelocity,
            FeatureKind::LaneId,
            FeatureKind::LeftMarkingCrossable,
            FeatureKind::RightMarkingCrossable,
        ];
        for slot in NeighborSlot::ALL {
            features.push(FeatureKind::NeighborDistance(slot));
            features.push(FeatureKind::NeighborDeltaV(slot));
        }
        Self { features }
    }
}

impl FeatureSchema {
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let features = names
            .iter()
            .map(|n| {
                FeatureKind::from_name(n.as_ref()).ok_or_else(|| {
                    Error::SchemaMismatch(format!("unknown feature `{}`", n.as_ref()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if features.is_empty() {
            return Err(Error::SchemaMismatch("empty feature schema".into()));
        }
        Ok(Self { features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name()).collect()
    }

    pub fn index_of(&self, kind: FeatureKind) -> Option<usize> {
        self.features.iter().position(|&f| f == kind)
    }

    /// Tab-separated `index, name, unit` lines with a header.
    pub fn to_document(&self) -> String {
        let mut out = String::from("index\tname\tunit\n");
        for (i, f) in self.features.iter().enumerate() {
            out.push_str(&format!("{i}\t{}\t{}\n", f.name(), f.unit()));
        }
        out
    }

    pub fn from_document(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let idx: usize = cols
                .next()
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| Error::SchemaMismatch(format!("line {}: bad index", i + 1)))?;
            if idx != names.len() {
                return Err(Error::SchemaMismatch(format!(
                    "line {}: index {idx} out of order",
                    i + 1
                )));
            }
            let name = cols
                .next()
                .ok_or_else(|| Error::SchemaMismatch(format!("line {}: missing name", i + 1)))?;
            names.push(name.trim().to_string());
        }
        Self::from_names(&names)
    }
}

/// Raw (unstandardized) feature vector of one sample.
pub fn feature_values(
    sample: &TrackSample,
    ctx: &SceneContext,
    schema: &FeatureSchema,
) -> Vec<f64> {
    schema
        .features
        .iter()
        .map(|f| match *f {
            FeatureKind::LaneOffset => sample.d_y_cl,
            FeatureKind::LateralVelocity => sample.vy,
            FeatureKind::LateralAcceleration => sample.ay,
            FeatureKind::LateralJerk => sample.jy,
            FeatureKind::LongitudinalVelocity => sample.vx,
            FeatureKind::LaneId => sample.lane_id as f64,
            FeatureKind::LeftMarkingCrossable => ctx.marking_left.crossable() as u8 as f64,
            FeatureKind::RightMarkingCrossable => ctx.marking_right.crossable() as u8 as f64,
            FeatureKind::TrafficDensity => ctx.traffic_density,
            FeatureKind::NeighborDistance(s) => ctx.slot(s).distance,
            FeatureKind::NeighborDeltaV(s) => ctx.slot(s).delta_v,
        })
        .collect()
}

/// Feature vector of `track` at `frame`.
pub fn extract_features(
    track: &Track,
    frame: u32,
    ctx: &SceneContext,
    schema: &FeatureSchema,
) -> Result<Vec<f64>> {
    let sample = track.sample_at_frame(frame).ok_or_else(|| {
        Error::SchemaMismatch(format!(
            "vehicle {} has no sample at frame {frame}",
            track.vehicle_id
        ))
    })?;
    let values = feature_values(sample, ctx, schema);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "feature `{}` is not finite for vehicle {} at frame {frame}",
            schema.features[i].name(),
            track.vehicle_id
        )));
    }
    Ok(values)
}

/// Per-dimension z-score transform fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation per column. Constant columns
    /// get unit scale.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("cannot fit a standardizer on zero rows"))?;
        let dim = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// One event per lane-id transition. The crossing instant is interpolated to
/// where the vehicle center passes the crossed marking.
pub fn detect_lane_changes(
    track: &Track,
    key: TrackKey,
    geometry: &LaneGeometry,
    frame_rate: f64,
) -> Vec<LaneChangeEvent> {
    let s = &track.samples;
    let mut events = Vec::new();
    for k in 1..s.len() {
        let (from, to) = (s[k - 1].lane_id, s[k].lane_id);
        if from == to || from == 0 || to == 0 {
            continue;
        }
        let direction = if to > from {
            LaneChangeDirection::Left
        } else {
            LaneChangeDirection::Right
        };
        let t_prev = s[k - 1].frame as f64 / frame_rate;
        let t_next = s[k].frame as f64 / frame_rate;
        let marking = match direction {
            LaneChangeDirection::Left => geometry.left_marking(from),
            LaneChangeDirection::Right => {
                from.checked_sub(1).and_then(|l| geometry.left_marking(l))
            }
        };
        let t_cross = marking
            .and_then(|m| {
                let a = s[k - 1].y - m;
                let b = s[k].y - m;
                (a * b <= 0.0 && a != b).then(|| t_prev + a / (a - b) * (t_next - t_prev))
            })
            .unwrap_or(t_next);
        events.push(LaneChangeEvent {
            track: key,
            direction,
            t_cross,
            frame_index: k,
            from_lane: from,
            to_lane: to,
            boundaries: None,
            traffic_density: f64::NAN,
        });
    }
    events
}

/// Thresholds of the lane-change activity condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityThresholds {
    pub lane_offset: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub jerk: f64,
}

impl Default for ActivityThresholds {
    fn default() -> Self {
        Self {
            lane_offset: 1.0,
            velocity: 0.1,
            acceleration: 0.1,
            jerk: 0.1,
        }
    }
}

impl ActivityThresholds {
    /// True while the vehicle is considered to be inside a lane change.
    pub fn active(&self, d_y_cl: f64, vy: f64, ay: f64, jy: f64) -> bool {
        d_y_cl.abs() >= self.lane_offset
            || vy.abs() >= self.velocity
            || ay.abs() >= self.acceleration
            || jy.abs() >= self.jerk
    }
}

/// Begin and end of the lane change crossing at `t_cross`.
///
/// `T_B` is the first frame of the contiguous run of active frames that
/// contains the crossing; `T_E` is the first inactive frame after it. Runs
/// touching a track end are marked truncated. Returns `None` when the
/// condition is not active around the crossing at all.
pub fn compute_lc_boundaries(
    track: &Track,
    t_cross: f64,
    frame_rate: f64,
    thresholds: &ActivityThresholds,
) -> Option<LaneChangeBoundaries> {
    let s = &track.samples;
    if s.is_empty() {
        return None;
    }
    let time = |k: usize| s[k].frame as f64 / frame_rate;
    let active = |k: usize| thresholds.active(s[k].d_y_cl, s[k].vy, s[k].ay, s[k].jy);
    let after = s.partition_point(|x| (x.frame as f64 / frame_rate) < t_cross);
    let anchor = [after, after.wrapping_sub(1)]
        .into_iter()
        .find(|&k| k < s.len() && active(k))?;
    let mut begin = anchor;
    while begin > 0 && active(begin - 1) {
        begin -= 1;
    }
    let mut end = anchor + 1;
    while end < s.len() && active(end) {
        end += 1;
    }
    let truncated = begin == 0 || end == s.len();
    let end_idx = end.min(s.len() - 1);
    let max_abs_vy = s[begin..=end_idx]
        .iter()
        .map(|x| x.vy.abs())
        .fold(0.0, f64::max);
    let t_begin = time(begin);
    let t_end = time(end_idx);
    Some(LaneChangeBoundaries {
        t_begin,
        t_end,
        duration: t_end - t_begin,
        max_abs_vy,
        truncated,
    })
}
