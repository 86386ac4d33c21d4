//! highD-format ingestion.
//!
//! Each recording is three comma-separated files: `XX_tracks.csv`,
//! `XX_tracksMeta.csv` and `XX_recordingMeta.csv`. Column names follow the
//! dataset convention exactly; unknown columns are ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data_model::{
    derive_lateral_jerk, CoordinateFrame, DrivingDirection, Recording, RecordingMeta, SceneContext,
    Track, TrackSample, VehicleClass, VehicleMeta,
};
use crate::error::{Error, Result};
use crate::features::{build_environment_model, FrameSnapshot, SnapshotVehicle};

pub const TRACKS_COLUMNS: [&str; 21] = [
    "frame",
    "id",
    "x",
    "y",
    "width",
    "height",
    "xVelocity",
    "yVelocity",
    "xAcceleration",
    "yAcceleration",
    "frontSightDistance",
    "backSightDistance",
    "precedingId",
    "followingId",
    "leftPrecedingId",
    "leftAlongsideId",
    "leftFollowingId",
    "rightPrecedingId",
    "rightAlongsideId",
    "rightFollowingId",
    "laneId",
];

pub const TRACKS_META_COLUMNS: [&str; 5] = [
    "id",
    "initialFrame",
    "finalFrame",
    "class",
    "drivingDirection",
];

pub const RECORDING_META_COLUMNS: [&str; 4] =
    ["id", "frameRate", "upperLaneMarkings", "lowerLaneMarkings"];

/// Optional extension column carrying the recorded road length in m.
pub const SEGMENT_LENGTH_COLUMN: &str = "segmentLength";

/// Paths of the three files that make up one recording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingFiles {
    pub tracks: PathBuf,
    pub tracks_meta: PathBuf,
    pub recording_meta: PathBuf,
}

impl RecordingFiles {
    pub fn in_dir(dir: &Path, id: u32) -> Self {
        Self {
            tracks: dir.join(format!("{id:02}_tracks.csv")),
            tracks_meta: dir.join(format!("{id:02}_tracksMeta.csv")),
            recording_meta: dir.join(format!("{id:02}_recordingMeta.csv")),
        }
    }
}

/// Recording ids with a complete file set in `dir`, ascending.
pub fn discover_recordings(dir: &Path) -> Result<Vec<u32>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(prefix) = name.strip_suffix("_tracks.csv") {
            if let Ok(id) = prefix.parse::<u32>() {
                let files = RecordingFiles::in_dir(dir, id);
                if files.tracks_meta.exists() && files.recording_meta.exists() {
                    ids.insert(id);
                }
            }
        }
    }
    Ok(ids.into_iter().collect())
}

struct Table {
    file: String,
    columns: HashMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|source| Error::Csv {
                file: file.clone(),
                source,
            })?;
        let headers = reader
            .headers()
            .map_err(|source| Error::Csv {
                file: file.clone(),
                source,
            })?
            .clone();
        let columns = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let rows = reader
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|source| Error::Csv {
                file: file.clone(),
                source,
            })?;
        Ok(Self {
            file,
            columns,
            rows,
        })
    }

    fn require(&self, names: &[&str]) -> Result<()> {
        for name in names {
            if !self.columns.contains_key(*name) {
                return Err(Error::MissingColumn {
                    file: self.file.clone(),
                    column: name.to_string(),
                });
            }
        }
        Ok(())
    }

    fn has(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    fn text<'a>(&self, row: &'a csv::StringRecord, row_no: usize, name: &str) -> Result<&'a str> {
        let idx = *self.columns.get(name).ok_or_else(|| Error::MissingColumn {
            file: self.file.clone(),
            column: name.to_string(),
        })?;
        row.get(idx).ok_or_else(|| Error::Parse {
            file: self.file.clone(),
            row: row_no,
            column: name.to_string(),
            message: "missing cell".into(),
        })
    }

    fn number<T: std::str::FromStr>(
        &self,
        row: &csv::StringRecord,
        row_no: usize,
        name: &str,
    ) -> Result<T> {
        let raw = self.text(row, row_no, name)?;
        raw.parse::<T>().map_err(|_| Error::Parse {
            file: self.file.clone(),
            row: row_no,
            column: name.to_string(),
            message: format!("not a number: `{raw}`"),
        })
    }

    fn markings(&self, row: &csv::StringRecord, row_no: usize, name: &str) -> Result<Vec<f64>> {
        let raw = self.text(row, row_no, name)?;
        let mut out = raw
            .split(';')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                p.trim().parse::<f64>().map_err(|_| Error::Parse {
                    file: self.file.clone(),
                    row: row_no,
                    column: name.to_string(),
                    message: format!("not a number: `{p}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.sort_by(f64::total_cmp);
        Ok(out)
    }
}

/// Parses one highD recording into the world frame (bounding-box centers,
/// lateral axis up). All vehicles start out as prediction targets.
pub fn parse_recording(files: &RecordingFiles) -> Result<Recording> {
    let rec_table = Table::read(&files.recording_meta)?;
    rec_table.require(&RECORDING_META_COLUMNS)?;
    let row = rec_table.rows.first().ok_or_else(|| Error::Parse {
        file: rec_table.file.clone(),
        row: 1,
        column: "id".into(),
        message: "no data row".into(),
    })?;
    let id: u32 = rec_table.number(row, 1, "id")?;
    let frame_rate: f64 = rec_table.number(row, 1, "frameRate")?;
    if !(frame_rate > 0.0) {
        return Err(Error::invalid(format!(
            "frame rate must be positive, got {frame_rate}"
        )));
    }
    let upper_markings = rec_table.markings(row, 1, "upperLaneMarkings")?;
    let lower_markings = rec_table.markings(row, 1, "lowerLaneMarkings")?;
    let declared_length: Option<f64> = if rec_table.has(SEGMENT_LENGTH_COLUMN) {
        Some(rec_table.number(row, 1, SEGMENT_LENGTH_COLUMN)?)
    } else {
        None
    };

    let meta_table = Table::read(&files.tracks_meta)?;
    meta_table.require(&TRACKS_META_COLUMNS)?;
    let mut vehicles = BTreeMap::new();
    for (i, row) in meta_table.rows.iter().enumerate() {
        let row_no = i + 1;
        let vid: u32 = meta_table.number(row, row_no, "id")?;
        let class_text = meta_table.text(row, row_no, "class")?;
        let class = VehicleClass::parse(class_text).ok_or_else(|| Error::Parse {
            file: meta_table.file.clone(),
            row: row_no,
            column: "class".into(),
            message: format!("unknown vehicle class `{class_text}`"),
        })?;
        let direction_code: i64 = meta_table.number(row, row_no, "drivingDirection")?;
        let direction = DrivingDirection::from_code(direction_code)?;
        vehicles.insert(
            vid,
            VehicleMeta {
                class,
                direction,
                initial_frame: meta_table.number(row, row_no, "initialFrame")?,
                final_frame: meta_table.number(row, row_no, "finalFrame")?,
            },
        );
    }

    let tracks_table = Table::read(&files.tracks)?;
    tracks_table.require(&TRACKS_COLUMNS)?;
    let mut meta = RecordingMeta {
        id,
        frame_rate,
        segment_start: 0.0,
        segment_length: declared_length.unwrap_or(0.0),
        upper_markings,
        lower_markings,
        vehicles,
    };

    let mut by_vehicle: BTreeMap<u32, Track> = BTreeMap::new();
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    for (i, row) in tracks_table.rows.iter().enumerate() {
        let row_no = i + 1;
        let t = &tracks_table;
        let vid: u32 = t.number(row, row_no, "id")?;
        let vmeta = *meta.vehicles.get(&vid).ok_or_else(|| Error::Parse {
            file: t.file.clone(),
            row: row_no,
            column: "id".into(),
            message: format!("vehicle {vid} not listed in tracks meta"),
        })?;
        let length: f64 = t.number(row, row_no, "width")?;
        let width: f64 = t.number(row, row_no, "height")?;
        let x_img: f64 = t.number(row, row_no, "x")?;
        let y_img: f64 = t.number(row, row_no, "y")?;
        x_min = x_min.min(x_img);
        x_max = x_max.max(x_img + length);
        let mut neighbors = [0u32; 8];
        for (slot, name) in neighbors.iter_mut().zip(&TRACKS_COLUMNS[12..20]) {
            *slot = t.number(row, row_no, name)?;
        }
        let lane_id: u32 = t.number(row, row_no, "laneId")?;
        let y = -(y_img + 0.5 * width);
        let d_y_cl = meta
            .world_lane_center(vmeta.direction, lane_id)
            .map_or(f64::NAN, |(center, _)| y - center);
        let sample = TrackSample {
            frame: t.number(row, row_no, "frame")?,
            vehicle_id: vid,
            x: x_img + 0.5 * length,
            y,
            vx: t.number(row, row_no, "xVelocity")?,
            vy: -t.number::<f64>(row, row_no, "yVelocity")?,
            ax: t.number(row, row_no, "xAcceleration")?,
            ay: -t.number::<f64>(row, row_no, "yAcceleration")?,
            jy: 0.0,
            lane_id,
            d_y_cl,
            front_sight: t.number(row, row_no, "frontSightDistance")?,
            back_sight: t.number(row, row_no, "backSightDistance")?,
            source_neighbors: neighbors,
        };
        by_vehicle
            .entry(vid)
            .or_insert_with(|| Track {
                vehicle_id: vid,
                class: vmeta.class,
                direction: vmeta.direction,
                length,
                width,
                samples: Vec::new(),
            })
            .samples
            .push(sample);
    }

    if declared_length.is_none() {
        if x_min.is_finite() && x_max > x_min {
            meta.segment_start = x_min;
            meta.segment_length = x_max - x_min;
        } else {
            return Err(Error::invalid(format!(
                "recording {id}: cannot infer segment length without `{SEGMENT_LENGTH_COLUMN}` or track data"
            )));
        }
    }

    let mut tracks: Vec<Track> = by_vehicle.into_values().collect();
    for track in &mut tracks {
        let frames: Vec<u32> = track.samples.iter().map(|s| s.frame).collect();
        let ay: Vec<f64> = track.samples.iter().map(|s| s.ay).collect();
        let jy = derive_lateral_jerk(&frames, &ay, frame_rate);
        for (s, j) in track.samples.iter_mut().zip(jy) {
            s.jy = j;
        }
    }
    let targets = tracks.iter().map(|t| t.vehicle_id).collect();
    Ok(Recording {
        meta,
        tracks,
        targets,
        frame: CoordinateFrame::World,
    })
}

fn fmt_markings(m: &[f64]) -> String {
    m.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Writes a world-frame recording as a highD file set.
pub fn write_recording(recording: &Recording, files: &RecordingFiles) -> Result<()> {
    if recording.frame != CoordinateFrame::World {
        return Err(Error::invalid(
            "only world-frame recordings can be written in highD layout",
        ));
    }
    let meta = &recording.meta;
    let mut out = String::new();
    out.push_str(&RECORDING_META_COLUMNS.join(","));
    out.push(',');
    out.push_str(SEGMENT_LENGTH_COLUMN);
    out.push('\n');
    out.push_str(&format!(
        "{},{},{},{},{}\n",
        meta.id,
        meta.frame_rate,
        fmt_markings(&meta.upper_markings),
        fmt_markings(&meta.lower_markings),
        meta.segment_length
    ));
    write_file(&files.recording_meta, &out)?;

    let mut out =
        String::from("id,width,height,initialFrame,finalFrame,numFrames,class,drivingDirection\n");
    for track in &recording.tracks {
        let vm = meta.vehicles.get(&track.vehicle_id).ok_or_else(|| {
            Error::invalid(format!(
                "vehicle {} missing from metadata",
                track.vehicle_id
            ))
        })?;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            track.vehicle_id,
            track.length,
            track.width,
            vm.initial_frame,
            vm.final_frame,
            track.samples.len(),
            vm.class.as_str(),
            vm.direction.code()
        ));
    }
    write_file(&files.tracks_meta, &out)?;

    let mut out = TRACKS_COLUMNS.join(",");
    out.push('\n');
    for track in &recording.tracks {
        for s in &track.samples {
            let n = &s.source_neighbors;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                s.frame,
                s.vehicle_id,
                s.x - 0.5 * track.length,
                -s.y - 0.5 * track.width,
                track.length,
                track.width,
                s.vx,
                -s.vy,
                s.ax,
                -s.ay,
                s.front_sight,
                s.back_sight,
                n[0],
                n[1],
                n[2],
                n[3],
                n[4],
                n[5],
                n[6],
                n[7],
                s.lane_id
            ));
        }
    }
    write_file(&files.tracks, &out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Point reflection through `(x_center, 0)`: maps one driving direction onto
/// the other. Applying it twice restores the input. Lane ids are untouched.
pub fn mirror_sample(sample: &TrackSample, x_center: f64) -> TrackSample {
    TrackSample {
        x: 2.0 * x_center - sample.x,
        y: -sample.y,
        vx: -sample.vx,
        vy: -sample.vy,
        ax: -sample.ax,
        ay: -sample.ay,
        jy: -sample.jy,
        d_y_cl: -sample.d_y_cl,
        ..sample.clone()
    }
}

/// Brings all tracks into the road frame: travel along `+x`, `y` to the
/// left, lanes numbered from 1 on the right. Idempotent on road-frame input.
pub fn normalize_direction(recording: &Recording) -> Result<Recording> {
    if recording.frame == CoordinateFrame::Road {
        return Ok(recording.clone());
    }
    let meta = &recording.meta;
    let center = meta.segment_center();
    let mut tracks = Vec::with_capacity(recording.tracks.len());
    for track in &recording.tracks {
        let direction = meta
            .vehicles
            .get(&track.vehicle_id)
            .map_or(track.direction, |v| v.direction);
        let samples = track
            .samples
            .iter()
            .map(|s| {
                let mut out = if direction.is_mirrored() {
                    mirror_sample(s, center)
                } else {
                    s.clone()
                };
                out.lane_id = meta.road_lane(direction, s.lane_id).unwrap_or(0);
                out
            })
            .collect();
        tracks.push(Track {
            direction,
            samples,
            ..track.clone()
        });
    }
    Ok(Recording {
        meta: meta.clone(),
        tracks,
        targets: recording.targets.clone(),
        frame: CoordinateFrame::Road,
    })
}

/// Virtual sensor limits applied to every target.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorModel {
    /// Objects farther away are replaced by the absent-neighbor default, m.
    pub max_range: f64,
    /// Samples with a front or back sight below this are excluded, m.
    pub min_sight: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            max_range: 150.0,
            min_sight: 80.0,
        }
    }
}

impl SensorModel {
    pub fn new(max_range: f64, min_sight: f64) -> Result<Self> {
        if !(min_sight > 0.0 && max_range > min_sight) {
            return Err(Error::invalid(format!(
                "sensor model requires max_range > min_sight > 0 (got {max_range}, {min_sight})"
            )));
        }
        Ok(Self {
            max_range,
            min_sight,
        })
    }

    pub fn admissible(&self, front_sight: f64, back_sight: f64) -> bool {
        front_sight >= self.min_sight && back_sight >= self.min_sight
    }
}

/// A road-frame recording with the environment model of every sample.
#[derive(Debug, Clone)]
pub struct SensedRecording {
    pub recording: Recording,
    pub sensor: SensorModel,
    /// Parallel to `recording.tracks[i].samples`.
    pub contexts: Vec<Vec<SceneContext>>,
    /// Parallel to `contexts`; false for samples excluded by the sight rule.
    pub admissible: Vec<Vec<bool>>,
    /// Traffic density per (direction, frame).
    pub density: BTreeMap<(DrivingDirection, u32), f64>,
}

/// Groups road-frame samples into per-direction frame snapshots.
pub fn frame_snapshots(
    recording: &Recording,
) -> Result<BTreeMap<(DrivingDirection, u32), FrameSnapshot>> {
    let meta = &recording.meta;
    let mut snapshots: BTreeMap<(DrivingDirection, u32), FrameSnapshot> = BTreeMap::new();
    for track in &recording.tracks {
        let lane_count = meta.lane_count(track.direction);
        for s in &track.samples {
            snapshots
                .entry((track.direction, s.frame))
                .or_insert_with(|| FrameSnapshot {
                    frame: s.frame,
                    lane_count,
                    segment_length: meta.segment_length,
                    vehicles: Vec::new(),
                })
                .vehicles
                .push(SnapshotVehicle {
                    id: s.vehicle_id,
                    x: s.x,
                    vx: s.vx,
                    lane_id: s.lane_id,
                    length: track.length,
                    front_sight: s.front_sight,
                    back_sight: s.back_sight,
                });
        }
    }
    Ok(snapshots)
}

/// Builds the environment model of every sample with the sensor limits
/// applied and flags samples that violate the sight-distance rule. All
/// vehicles, trucks and excluded samples included, remain visible as
/// neighbors and count towards density.
pub fn apply_sensor_model(recording: &Recording, sensor: SensorModel) -> Result<SensedRecording> {
    if recording.frame != CoordinateFrame::Road {
        return Err(Error::invalid(
            "apply_sensor_model expects a direction-normalized recording",
        ));
    }
    let snapshots = frame_snapshots(recording)?;
    let mut density = BTreeMap::new();
    for (key, snap) in &snapshots {
        density.insert(*key, crate::features::compute_traffic_density(snap)?);
    }
    let mut contexts = Vec::with_capacity(recording.tracks.len());
    let mut admissible = Vec::with_capacity(recording.tracks.len());
    for track in &recording.tracks {
        let mut ctx_row = Vec::with_capacity(track.samples.len());
        let mut adm_row = Vec::with_capacity(track.samples.len());
        for s in &track.samples {
            let snap = &snapshots[&(track.direction, s.frame)];
            let ctx = build_environment_model(snap, s.vehicle_id, &sensor)?;
            adm_row.push(sensor.admissible(ctx.front_sight, ctx.back_sight));
            ctx_row.push(ctx);
        }
        contexts.push(ctx_row);
        admissible.push(adm_row);
    }
    Ok(SensedRecording {
        recording: recording.clone(),
        sensor,
        contexts,
        admissible,
        density,
    })
}

/// Removes trucks from the prediction targets. Truck tracks stay in the
/// recording so they keep appearing as neighbors.
pub fn filter_cars(recording: &Recording) -> Recording {
    let targets = recording
        .tracks
        .iter()
        .filter(|t| t.class == VehicleClass::Car && recording.targets.contains(&t.vehicle_id))
        .map(|t| t.vehicle_id)
        .collect();
    Recording {
        targets,
        ..recording.clone()
    }
}

/// Parse, normalize and car-filter every recording found in `dir`.
pub fn load_directory(dir: &Path) -> Result<Vec<Recording>> {
    discover_recordings(dir)?
        .into_iter()
        .map(|id| {
            let raw = parse_recording(&RecordingFiles::in_dir(dir, id))?;
            Ok(filter_cars(&normalize_direction(&raw)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{validate, NeighborSlot};

    fn write_synthetic(dir: &Path, n_vehicles: u32, n_frames: u32) -> RecordingFiles {
        let files = RecordingFiles::in_dir(dir, 7);
        fs::write(
            &files.recording_meta,
            "id,frameRate,locationId,upperLaneMarkings,lowerLaneMarkings\n7,25,2,10.0;13.75;17.5,21.0;24.75;28.5\n",
        )
        .unwrap();
        let mut meta = String::from(
            "id,width,height,initialFrame,finalFrame,numFrames,class,drivingDirection\n",
        );
        for v in 1..=n_vehicles {
            let class = if v % 2 == 0 { "Truck" } else { "Car" };
            let dir = if v == 1 { 1 } else { 2 };
            meta.push_str(&format!(
                "{v},4.5,1.8,1,{n_frames},{n_frames},{class},{dir}\n"
            ));
        }
        fs::write(&files.tracks_meta, meta).unwrap();
        let mut tracks = TRACKS_COLUMNS.join(",");
        tracks.push('\n');
        for v in 1..=n_vehicles {
            for f in 1..=n_frames {
                let (x, vx, lane, y) = if v == 1 {
                    (300.0 - f as f64, -30.0, 2, 10.5)
                } else {
                    (50.0 + v as f64 * 20.0 + f as f64, 30.0, 6, 26.0)
                };
                tracks.push_str(&format!(
                    "{f},{v},{x},{y},4.5,1.8,{vx},0.1,0.0,0.05,200,150,0,0,0,0,0,0,0,0,{lane}\n"
                ));
            }
        }
        fs::write(&files.tracks, tracks).unwrap();
        files
    }

    #[test]
    fn parses_two_vehicles_ten_frames() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_synthetic(dir.path(), 2, 10);
        let rec = parse_recording(&files).unwrap();
        assert_eq!(rec.tracks.len(), 2);
        assert!(rec.tracks.iter().all(|t| t.samples.len() == 10));
        assert_eq!(rec.tracks[1].class, VehicleClass::Truck);
        assert_eq!(rec.meta.frame_rate, 25.0);
        assert!(validate(&rec).is_empty(), "{:?}", validate(&rec));
    }

    #[test]
    fn missing_lane_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_synthetic(dir.path(), 2, 3);
        let text = fs::read_to_string(&files.tracks).unwrap();
        let stripped: String = text
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
            .collect();
        fs::write(&files.tracks, stripped).unwrap();
        match parse_recording(&files) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "laneId"),
            other => panic!("expected missing column, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_synthetic(dir.path(), 1, 3);
        let text = fs::read_to_string(&files.tracks).unwrap();
        let broken = text.replacen("\n2,1,", "\nabc,1,", 1);
        fs::write(&files.tracks, broken).unwrap();
        match parse_recording(&files) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "frame");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_direction_code_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_synthetic(dir.path(), 1, 3);
        let text = fs::read_to_string(&files.tracks_meta).unwrap();
        fs::write(&files.tracks_meta, text.replace(",Car,1", ",Car,3")).unwrap();
        assert!(parse_recording(&files).is_err());
    }

    #[test]
    fn normalization_flips_upper_direction() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_synthetic(dir.path(), 3, 5);
        let raw = parse_recording(&files).unwrap();
        let norm = normalize_direction(&raw).unwrap();
        let upper = &norm.tracks[0];
        assert_eq!(upper.direction, DrivingDirection::Upper);
        assert!(upper.samples.iter().all(|s| s.vx == 30.0));
        // raw lane 2 is the topmost upper lane, i.e. the rightmost one
        assert!(upper.samples.iter().all(|s| s.lane_id == 1));
        // lower vehicles keep their kinematics, lane renumbered
        let lower_raw = &raw.tracks[2];
        let lower = &norm.tracks[2];
        for (a, b) in lower_raw.samples.iter().zip(&lower.samples) {
            assert_eq!((a.x, a.y, a.vx, a.vy, a.ay), (b.x, b.y, b.vx, b.vy, b.ay));
        }
        // raw lane 6 is the bottom lower lane, the rightmost of direction 2
        assert!(lower.samples.iter().all(|s| s.lane_id == 1));
        assert!(validate(&norm).is_empty());
        assert_eq!(normalize_direction(&norm).unwrap(), norm);
    }

    #[test]
    fn mirror_is_an_involution() {
        let s = TrackSample {
            frame: 3,
            vehicle_id: 9,
            x: 12.5,
            y: -3.25,
            vx: -31.0,
            vy: 0.4,
            ax: 0.1,
            ay: -0.2,
            jy: 0.05,
            lane_id: 2,
            d_y_cl: 0.3,
            front_sight: 100.0,
            back_sight: 90.0,
            source_neighbors: [1, 2, 3, 4, 5, 6, 7, 8],
        };
        let twice = mirror_sample(&mirror_sample(&s, 210.0), 210.0);
        assert_eq!(twice, s);
    }

    #[test]
    fn car_filter_keeps_trucks_visible() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_synthetic(dir.path(), 5, 4);
        let rec = normalize_direction(&parse_recording(&files).unwrap()).unwrap();
        let cars = filter_cars(&rec);
        assert_eq!(cars.targets.len(), 3);
        assert_eq!(cars.tracks.len(), 5);
        assert_eq!(cars.tracks, rec.tracks);
        // vehicle 3 (car, lower direction) has vehicle 4 (truck) 20 m ahead in lane
        let sensed = apply_sensor_model(&cars, SensorModel::default()).unwrap();
        let idx = cars.tracks.iter().position(|t| t.vehicle_id == 3).unwrap();
        let front = sensed.contexts[idx][0].slot(NeighborSlot::EgoPreceding);
        assert!(front.present);
        assert_eq!(front.vehicle_id, Some(4));
    }

    #[test]
    fn all_truck_recording_has_no_targets() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_synthetic(dir.path(), 3, 4);
        let text = fs::read_to_string(&files.tracks_meta).unwrap();
        fs::write(&files.tracks_meta, text.replace("Car", "Truck")).unwrap();
        let rec = filter_cars(&normalize_direction(&parse_recording(&files).unwrap()).unwrap());
        assert!(rec.targets.is_empty());
        assert_eq!(rec.tracks.len(), 3);
        assert!(validate(&rec).is_empty());
    }

    #[test]
    fn sight_rule_flags_samples_below_limit() {
        let sensor = SensorModel::default();
        assert!(!sensor.admissible(79.0, 200.0));
        assert!(!sensor.admissible(200.0, 79.9));
        assert!(sensor.admissible(80.0, 80.0));
        assert!(SensorModel::new(80.0, 150.0).is_err());
    }
}
