//! Synthetic highD-format corpora with known lane-change ground truth.
//!
//! Every vehicle drives at its lane's speed and oscillates around the lane
//! center. Lane changers follow a [`LaneChangeProfile`] whose duration,
//! peak lateral speed and timing spread depend affinely on traffic density.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{
    CoordinateFrame, DrivingDirection, LaneChangeDirection, LaneGeometry, Recording, RecordingMeta,
    Track, TrackSample, VehicleClass, VehicleMeta,
};
use crate::error::{Error, Result};
use crate::features::{traffic_density, ActivityThresholds};
use crate::ingest::{mirror_sample, write_recording, RecordingFiles};

pub const EVENTS_FILE: &str = "manifest_events.tsv";
pub const DENSITY_FILE: &str = "manifest_density.tsv";

/// Lateral kinematics at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LateralState {
    pub y: f64,
    pub vy: f64,
    pub ay: f64,
    pub jy: f64,
}

impl std::ops::Add for LateralState {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            y: self.y + o.y,
            vy: self.vy + o.vy,
            ay: self.ay + o.ay,
            jy: self.jy + o.jy,
        }
    }
}

/// `B(u)` and its first three derivatives for the unit bump
/// `b(u) = 8/3 sin^4(pi u)` on `[0, 1]`; `B(0) = 0`, `B(1) = 1`.
fn bump(u: f64) -> [f64; 4] {
    if u <= 0.0 {
        return [0.0; 4];
    }
    if u >= 1.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let (s2, c2) = (2.0 * PI * u).sin_cos();
    let (s4, c4) = (4.0 * PI * u).sin_cos();
    [
        u - 2.0 / (3.0 * PI) * s2 + s4 / (12.0 * PI),
        1.0 - 4.0 / 3.0 * c2 + c4 / 3.0,
        8.0 * PI / 3.0 * s2 - 4.0 * PI / 3.0 * s4,
        16.0 * PI * PI / 3.0 * (c2 - c4),
    ]
}

/// Peak of the unit bump's derivative.
const BUMP_PEAK: f64 = 8.0 / 3.0;

/// Fraction of the lane width covered by the narrow bump.
const INNER_SHARE: f64 = 0.25;

/// Smooth lateral transition between two lane centers.
///
/// The shape is a blend of two bumps: a broad one over the whole duration
/// and a narrow one placed at `skew * duration` that supplies the extra
/// speed needed to reach the requested peak. A long gentle drift followed by
/// an abrupt move and a plain symmetric S-curve are both special cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeProfile {
    pub start_center: f64,
    pub target_center: f64,
    pub duration: f64,
    /// Largest lateral speed reached, m/s.
    pub peak_speed: f64,
    outer_share: f64,
    inner_start: f64,
    inner_duration: f64,
}

impl LaneChangeProfile {
    /// Profile with the narrow bump centered at `skew * duration`. A
    /// `peak_speed` below the single-bump minimum `8/3 W / duration` is
    /// raised to it.
    pub fn new(
        start_center: f64,
        target_center: f64,
        duration: f64,
        peak_speed: f64,
        skew: f64,
    ) -> Result<Self> {
        let w = (target_center - start_center).abs();
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::invalid(format!(
                "lane change duration must be positive, got {duration}"
            )));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::invalid(
                "lane change needs distinct start and target centers",
            ));
        }
        if !(0.0..=1.0).contains(&skew) {
            return Err(Error::invalid(format!("skew {skew} outside [0, 1]")));
        }
        let single = BUMP_PEAK * w / duration;
        let inner_share = INNER_SHARE;
        let denom = peak_speed / (BUMP_PEAK * w) - (1.0 - inner_share) / duration;
        let (outer_share, inner_duration) =
            if peak_speed.is_finite() && denom > 0.0 && inner_share / denom < duration {
                (1.0 - inner_share, inner_share / denom)
            } else {
                (1.0, duration)
            };
        let inner_start =
            (skew * duration - 0.5 * inner_duration).clamp(0.0, duration - inner_duration);
        let mut p = Self {
            start_center,
            target_center,
            duration,
            peak_speed: single,
            outer_share,
            inner_start,
            inner_duration,
        };
        p.peak_speed = p.max_speed();
        Ok(p)
    }

    /// Offset from the start center at time `t` after the maneuver begins.
    pub fn state(&self, t: f64) -> LateralState {
        let w = self.target_center - self.start_center;
        let o = bump(t / self.duration);
        let i = bump((t - self.inner_start) / self.inner_duration);
        let (a, b) = (w * self.outer_share, w * (1.0 - self.outer_share));
        let (d, e) = (self.duration, self.inner_duration);
        LateralState {
            y: self.start_center + a * o[0] + b * i[0],
            vy: a * o[1] / d + b * i[1] / e,
            ay: a * o[2] / (d * d) + b * i[2] / (e * e),
            jy: a * o[3] / (d * d * d) + b * i[3] / (e * e * e),
        }
    }

    /// Time at which the vehicle passes the midpoint between both centers.
    pub fn crossing_time(&self) -> f64 {
        let mid = 0.5 * (self.start_center + self.target_center);
        let rising = self.target_center > self.start_center;
        bisect(0.0, self.duration, |t| (self.state(t).y >= mid) == rising)
    }

    /// Signed distance to the center of the lane occupied at `t`.
    pub fn lane_offset(&self, t: f64) -> f64 {
        let y = self.state(t).y;
        if t < self.crossing_time() {
            y - self.start_center
        } else {
            y - self.target_center
        }
    }

    /// Interval `[T_B, T_E)` during which the activity condition holds
    /// around the crossing, on the continuous time axis.
    pub fn support(&self, thresholds: &ActivityThresholds) -> (f64, f64) {
        let tc = self.crossing_time();
        let active = |t: f64| {
            let s = self.state(t);
            let d = if t < tc {
                s.y - self.start_center
            } else {
                s.y - self.target_center
            };
            thresholds.active(d, s.vy, s.ay, s.jy)
        };
        activity_support(active, tc, -1.0, self.duration + 1.0).unwrap_or((tc, tc))
    }

    fn max_speed(&self) -> f64 {
        let n = 2000;
        (0..=n)
            .map(|k| self.state(self.duration * k as f64 / n as f64).vy.abs())
            .fold(0.0, f64::max)
    }
}

/// Symmetric profile; the lateral speed peaks at `duration / 2`.
pub fn sigmoid_lane_change(
    start_center: f64,
    target_center: f64,
    duration: f64,
    peak_speed: f64,
) -> Result<LaneChangeProfile> {
    LaneChangeProfile::new(start_center, target_center, duration, peak_speed, 0.5)
}

/// Smallest `t` in `[lo, hi]` with `pred(t)` true, assuming `pred` is false
/// then true.
fn bisect(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    hi
}

/// Maximal run of `active` around `anchor` within `[lo, hi]`, as
/// (first active instant, first inactive instant after it).
pub fn activity_support(
    active: impl Fn(f64) -> bool,
    anchor: f64,
    lo: f64,
    hi: f64,
) -> Option<(f64, f64)> {
    if !active(anchor) {
        return None;
    }
    let step = 2e-3;
    let mut t = anchor;
    while t - step > lo && active(t - step) {
        t -= step;
    }
    let begin = if t - step <= lo {
        lo
    } else {
        bisect(t - step, t, &active)
    };
    let mut t = anchor;
    while t + step < hi && active(t + step) {
        t += step;
    }
    let end = if t + step >= hi {
        hi
    } else {
        bisect(t, t + step, |x| !active(x))
    };
    Some((begin, end))
}

/// `intercept + slope * density`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineLaw {
    pub intercept: f64,
    pub slope: f64,
}

impl AffineLaw {
    pub fn at(&self, density: f64) -> f64 {
        self.intercept + self.slope * density
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub lanes: usize,
    pub lane_width: f64,
    pub segment_length: f64,
    pub frame_rate: f64,
    /// Recorded time span per recording, s.
    pub recording_duration: f64,
    /// Target densities, veh/(km*lane); recordings sweep the range evenly.
    pub density_range: [f64; 2],
    /// Relative half-width of the uniform headway jitter.
    pub spacing_jitter: f64,
    /// Rightmost-lane speed at zero density, m/s.
    pub free_speed: f64,
    /// Speed increase per lane to the left, m/s.
    pub lane_speed_step: f64,
    /// Speed loss per unit density, m/s.
    pub speed_density_slope: f64,
    pub min_speed: f64,
    /// Share of trucks among all vehicles; trucks stay in the rightmost lane.
    pub truck_share: f64,
    /// Lane-keeping amplitude, m.
    pub keeping_amplitude: AffineLaw,
    pub keeping_min_amplitude: f64,
    /// Lane-keeping frequency range, Hz.
    pub keeping_frequency: [f64; 2],
    /// Exponential decay rate of the lane-keeping oscillation, 1/s.
    pub keeping_damping: f64,
    /// Probability that a car changes lanes while on the segment.
    pub lane_change_rate: f64,
    /// Lane-change duration `T_E - T_B`, s.
    pub duration_law: AffineLaw,
    /// Peak lateral speed during a lane change, m/s.
    pub peak_speed_law: AffineLaw,
    /// Relative half-width of the uniform jitter on duration and peak speed.
    pub maneuver_noise: AffineLaw,
    /// Position of the abrupt part within the maneuver, as a fraction.
    pub skew: AffineLaw,
    /// Half-width of the uniform jitter on `skew`.
    pub skew_noise: AffineLaw,
    /// Standard deviation of the lateral offset from the target lane center
    /// at which a lane change settles, m.
    pub terminal_offset_noise: AffineLaw,
    /// Standard deviation of the white noise on lateral position, m.
    pub position_noise: f64,
    /// Range of the crossing position as fractions of the segment length.
    pub crossing_zone: [f64; 2],
    /// Lane changers adapt to the target lane's speed starting this long
    /// before the crossing, s.
    pub speed_adaptation_lead: f64,
    pub speed_adaptation_time: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            lanes: 3,
            lane_width: 3.75,
            segment_length: 600.0,
            frame_rate: 25.0,
            recording_duration: 60.0,
            density_range: [10.0, 30.0],
            spacing_jitter: 0.3,
            free_speed: 33.0,
            lane_speed_step: 2.5,
            speed_density_slope: 0.3,
            min_speed: 8.0,
            truck_share: 0.1,
            keeping_amplitude: AffineLaw {
                intercept: 0.26,
                slope: -0.005,
            },
            keeping_min_amplitude: 0.04,
            keeping_frequency: [0.03, 0.05],
            keeping_damping: 0.0,
            lane_change_rate: 0.35,
            duration_law: AffineLaw {
                intercept: 5.8,
                slope: 0.025,
            },
            peak_speed_law: AffineLaw {
                intercept: 2.4,
                slope: 0.012,
            },
            maneuver_noise: AffineLaw {
                intercept: 0.01,
                slope: 0.0008,
            },
            skew: AffineLaw {
                intercept: 0.65,
                slope: 0.0,
            },
            skew_noise: AffineLaw {
                intercept: 0.0,
                slope: 0.004,
            },
            terminal_offset_noise: AffineLaw {
                intercept: 0.0,
                slope: 0.02,
            },
            position_noise: 0.02,
            crossing_zone: [0.5, 0.8],
            speed_adaptation_lead: 6.0,
            speed_adaptation_time: 1.0,
            seed: 0,
        }
    }
}

const CAR_LENGTH: [f64; 2] = [4.2, 5.0];
const TRUCK_LENGTH: [f64; 2] = [10.0, 14.0];
const MIN_GAP: f64 = 2.0;
/// Settled lane changers stay this far inside the lane-offset threshold, m.
const TERMINAL_MARGIN: f64 = 0.1;

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.lanes == 0 {
            return bad("at least one lane is required".into());
        }
        for (name, v) in [
            ("lane_width", self.lane_width),
            ("segment_length", self.segment_length),
            ("frame_rate", self.frame_rate),
            ("recording_duration", self.recording_duration),
            ("speed_adaptation_time", self.speed_adaptation_time),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("spacing_jitter", self.spacing_jitter),
            ("truck_share", self.truck_share),
            ("lane_change_rate", self.lane_change_rate),
            ("position_noise", self.position_noise),
            ("keeping_damping", self.keeping_damping),
            ("keeping_min_amplitude", self.keeping_min_amplitude),
            ("speed_adaptation_lead", self.speed_adaptation_lead),
            ("min_speed", self.min_speed),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.spacing_jitter >= 1.0 || self.lane_change_rate > 1.0 || self.truck_share > 1.0 {
            return bad("spacing_jitter must be < 1; rates and shares must be <= 1".into());
        }
        let [lo, hi] = self.density_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("density range [{lo}, {hi}] is invalid"));
        }
        let longest = if self.truck_share > 0.0 {
            TRUCK_LENGTH[1]
        } else {
            CAR_LENGTH[1]
        };
        if (1.0 - self.spacing_jitter) * 1000.0 / hi < longest + MIN_GAP {
            return bad(format!(
                "density {hi} veh/(km*lane) is infeasible: minimum headway falls below {} m",
                longest + MIN_GAP
            ));
        }
        let [f_lo, f_hi] = self.keeping_frequency;
        if !(f_lo > 0.0 && f_hi >= f_lo) {
            return bad(format!(
                "lane-keeping frequency range [{f_lo}, {f_hi}] is invalid"
            ));
        }
        let [z_lo, z_hi] = self.crossing_zone;
        if !(0.0 <= z_lo && z_lo <= z_hi && z_hi <= 1.0) {
            return bad(format!(
                "crossing zone [{z_lo}, {z_hi}] must lie within [0, 1]"
            ));
        }
        let th = ActivityThresholds::default();
        let rate = (2.0 * PI * f_hi).hypot(self.keeping_damping);
        for rho in [lo, hi] {
            let a = self.amplitude(rho);
            if a >= th.lane_offset
                || a * rate >= th.velocity
                || a * rate * rate >= th.acceleration
                || a * rate.powi(3) >= th.jerk
            {
                return bad(format!(
                    "lane keeping at density {rho} would count as lane-change activity"
                ));
            }
            for (name, law) in [
                ("duration_law", self.duration_law),
                ("peak_speed_law", self.peak_speed_law),
            ] {
                if !(law.at(rho) > 0.0) {
                    return bad(format!("{name} is not positive at density {rho}"));
                }
            }
            if !(0.0..=1.0).contains(&self.skew.at(rho)) {
                return bad(format!(
                    "skew {} outside [0, 1] at density {rho}",
                    self.skew.at(rho)
                ));
            }
            if !(self.maneuver_noise.at(rho) >= 0.0
                && self.maneuver_noise.at(rho) < 1.0
                && self.skew_noise.at(rho) >= 0.0
                && self.terminal_offset_noise.at(rho) >= 0.0)
            {
                return bad(format!("noise laws out of range at density {rho}"));
            }
        }
        Ok(())
    }

    pub fn lane_speed(&self, lane: u32, density: f64) -> f64 {
        (self.free_speed + self.lane_speed_step * (lane as f64 - 1.0)
            - self.speed_density_slope * density)
            .max(self.min_speed)
    }

    pub fn amplitude(&self, density: f64) -> f64 {
        self.keeping_amplitude
            .at(density)
            .max(self.keeping_min_amplitude)
    }

    /// Target density of recording `index` out of `count`.
    pub fn recording_density(&self, index: usize, count: usize) -> f64 {
        let [lo, hi] = self.density_range;
        if count <= 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * index as f64 / (count - 1) as f64
        }
    }

    /// Image-frame lane markings of both carriageways.
    fn markings(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.lanes;
        let upper: Vec<f64> = (0..=n).map(|k| 8.0 + k as f64 * self.lane_width).collect();
        let start = upper[n] + 2.0;
        let lower = (0..=n)
            .map(|k| start + k as f64 * self.lane_width)
            .collect();
        (upper, lower)
    }
}

/// Profile whose activity support (without lane keeping) lasts `target`
/// seconds, found by bisection on the nominal duration.
pub fn profile_for_support(
    start_center: f64,
    target_center: f64,
    target: f64,
    peak_speed: f64,
    skew: f64,
    thresholds: &ActivityThresholds,
) -> Result<LaneChangeProfile> {
    let length = |d: f64| -> Result<f64> {
        let p = LaneChangeProfile::new(start_center, target_center, d, peak_speed, skew)?;
        let (b, e) = p.support(thresholds);
        Ok(e - b)
    };
    // smallest nominal duration reaching the target; support is not
    // monotone for very long durations
    let step = 0.05 * target;
    let mut hi = step;
    while length(hi)? < target {
        hi += step;
        if hi > 3.0 * target {
            return Err(Error::invalid(format!(
                "no lane-change profile with support {target} s and peak speed {peak_speed} m/s"
            )));
        }
    }
    let mut lo = hi - step;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if length(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-7 {
            break;
        }
    }
    LaneChangeProfile::new(
        start_center,
        target_center,
        0.5 * (lo + hi),
        peak_speed,
        skew,
    )
}

/// Ground truth of one generated lane change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEvent {
    pub recording: u32,
    pub vehicle: u32,
    pub direction: String,
    pub t_begin: f64,
    pub t_cross: f64,
    pub t_end: f64,
    pub duration: f64,
    pub max_abs_vy: f64,
    pub density: f64,
    /// The activity support extends beyond the observed track.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDensity {
    pub recording: u32,
    pub direction: u8,
    pub frame: u32,
    pub vehicles: usize,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedRecording {
    pub recording: Recording,
    pub target_density: f64,
    pub events: Vec<ManifestEvent>,
    pub density: Vec<ManifestDensity>,
}

impl GeneratedRecording {
    /// Mean per-frame density over frames after the segment has filled up.
    pub fn achieved_density(&self) -> f64 {
        let v: Vec<f64> = self.density.iter().map(|d| d.density).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub recordings: Vec<RecordingSummary>,
    pub events: usize,
    pub tracks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSummary {
    pub id: u32,
    pub target_density: f64,
    pub achieved_density: f64,
    pub within_tolerance: bool,
}

struct Vehicle {
    id: u32,
    class: VehicleClass,
    length: f64,
    width: f64,
    lane: u32,
    x0: f64,
    speed: f64,
    amplitude: f64,
    omega: f64,
    phase: f64,
    maneuver: Option<Maneuver>,
}

struct Maneuver {
    direction: LaneChangeDirection,
    to_lane: u32,
    start: f64,
    profile: LaneChangeProfile,
    ramp_start: f64,
    delta_v: f64,
}

impl Vehicle {
    fn keeping(&self, t: f64, damping: f64) -> LateralState {
        // imaginary part of A exp((-z + i w) t + i phi) and its derivatives
        let (re, im) = (-damping, self.omega);
        let env = self.amplitude * (-damping * t).exp();
        let (s, c) = (self.omega * t + self.phase).sin_cos();
        let mut p = (1.0, 0.0);
        let mut out = [0.0; 4];
        for o in &mut out {
            *o = env * (p.0 * s + p.1 * c);
            p = (p.0 * re - p.1 * im, p.0 * im + p.1 * re);
        }
        LateralState {
            y: out[0],
            vy: out[1],
            ay: out[2],
            jy: out[3],
        }
    }

    fn lateral(&self, t: f64, geo: &LaneGeometry, damping: f64) -> LateralState {
        let base = geo.lane_center(self.lane).unwrap_or(0.0);
        let k = self.keeping(t, damping);
        match &self.maneuver {
            Some(m) => m.profile.state(t - m.start) + k,
            None => {
                LateralState {
                    y: base,
                    ..Default::default()
                } + k
            }
        }
    }

    fn longitudinal(&self, t: f64, ramp: f64) -> (f64, f64, f64) {
        let mut x = self.x0 + self.speed * t;
        let (mut vx, mut ax) = (self.speed, 0.0);
        if let Some(m) = &self.maneuver {
            let s = ((t - m.ramp_start) / ramp).clamp(0.0, 1.0);
            let r = if t - m.ramp_start > ramp {
                0.5 + (t - m.ramp_start) / ramp - 1.0
            } else {
                s * s * s - 0.5 * s * s * s * s
            };
            x += m.delta_v * ramp * r;
            vx += m.delta_v * (3.0 * s * s - 2.0 * s * s * s);
            ax = m.delta_v / ramp * 6.0 * s * (1.0 - s);
        }
        (x, vx, ax)
    }

    fn lane_at(&self, t: f64, y_clean: f64, geo: &LaneGeometry) -> u32 {
        match &self.maneuver {
            Some(m) if t >= m.start => geo.lane_at(y_clean).unwrap_or(m.to_lane),
            _ => self.lane,
        }
    }
}

/// Generates recording `id` at `target_density` in memory.
pub fn generate_recording(
    config: &ScenarioConfig,
    id: u32,
    target_density: f64,
) -> Result<GeneratedRecording> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(id as u64);
    let (upper, lower) = config.markings();
    let mut meta = RecordingMeta {
        id,
        frame_rate: config.frame_rate,
        segment_start: 0.0,
        segment_length: config.segment_length,
        upper_markings: upper,
        lower_markings: lower,
        vehicles: BTreeMap::new(),
    };
    let thresholds = ActivityThresholds::default();
    let noise = Normal::new(0.0, config.position_noise.max(0.0))
        .map_err(|e| Error::invalid(format!("position noise: {e}")))?;
    let len = config.segment_length;
    let rho = target_density;
    let frames = (config.recording_duration * config.frame_rate).round() as u32;
    let fr = config.frame_rate;
    let x_center = meta.segment_center();
    let mut next_id = 1u32;
    let mut tracks = Vec::new();
    let mut events = Vec::new();
    let mut counts: BTreeMap<(DrivingDirection, u32), usize> = BTreeMap::new();

    for direction in [DrivingDirection::Upper, DrivingDirection::Lower] {
        let geo = meta.road_geometry(direction)?;
        let lanes = geo.lane_count() as u32;
        let mut vehicles = Vec::new();
        for lane in 1..=lanes {
            let speed = config.lane_speed(lane, rho);
            let truck_p = if lane == 1 {
                (config.truck_share * lanes as f64).min(1.0)
            } else {
                0.0
            };
            let mean_gap = 1000.0 / rho;
            let mut x = len + rng.random_range(0.0..mean_gap);
            let mut prev_len = 0.0;
            let horizon = -(speed + config.lane_speed_step) * config.recording_duration - mean_gap;
            loop {
                let truck = rng.random_bool(truck_p);
                let length = if truck {
                    rng.random_range(TRUCK_LENGTH[0]..TRUCK_LENGTH[1])
                } else {
                    rng.random_range(CAR_LENGTH[0]..CAR_LENGTH[1])
                };
                let jitter =
                    rng.random_range(1.0 - config.spacing_jitter..=1.0 + config.spacing_jitter);
                x -= (mean_gap * jitter).max(0.5 * (prev_len + length) + MIN_GAP);
                prev_len = length;
                if x < horizon {
                    break;
                }
                let [f_lo, f_hi] = config.keeping_frequency;
                let freq = if f_hi > f_lo {
                    rng.random_range(f_lo..f_hi)
                } else {
                    f_lo
                };
                vehicles.push(Vehicle {
                    id: next_id,
                    class: if truck {
                        VehicleClass::Truck
                    } else {
                        VehicleClass::Car
                    },
                    length,
                    width: if truck {
                        2.5
                    } else {
                        rng.random_range(1.75..2.05)
                    },
                    lane,
                    x0: x,
                    speed,
                    amplitude: config.amplitude(rho),
                    omega: 2.0 * PI * freq,
                    phase: rng.random_range(0.0..2.0 * PI),
                    maneuver: None,
                });
                next_id += 1;
            }
        }

        for v in &mut vehicles {
            let wants = v.class == VehicleClass::Car && rng.random_bool(config.lane_change_rate);
            let choice: f64 = rng.random();
            let zone: f64 = rng.random_range(config.crossing_zone[0]..=config.crossing_zone[1]);
            let jitter = config.maneuver_noise.at(rho);
            let dur_j: f64 = rng.random_range(-1.0..=1.0);
            let peak_j: f64 = rng.random_range(-1.0..=1.0);
            let skew_j: f64 = rng.random_range(-1.0..=1.0);
            let offset_z: f64 = rng.sample(StandardNormal);
            if !wants {
                continue;
            }
            let direction = match (v.lane > 1, v.lane < lanes) {
                (true, true) if choice < 0.5 => LaneChangeDirection::Right,
                (true, true) | (false, true) => LaneChangeDirection::Left,
                (true, false) => LaneChangeDirection::Right,
                (false, false) => continue,
            };
            let to_lane = match direction {
                LaneChangeDirection::Left => v.lane + 1,
                LaneChangeDirection::Right => v.lane - 1,
            };
            let t_cross = (zone * len - v.x0) / v.speed;
            if t_cross < config.speed_adaptation_lead.max(5.0)
                || t_cross > config.recording_duration - 1.0
            {
                continue;
            }
            let from_c = geo.lane_center(v.lane).unwrap_or(0.0);
            let to_c = geo.lane_center(to_lane).unwrap_or(0.0);
            let support = config.duration_law.at(rho) * (1.0 + jitter * dur_j);
            let peak = config.peak_speed_law.at(rho) * (1.0 + jitter * peak_j);
            let skew = (config.skew.at(rho) + config.skew_noise.at(rho) * skew_j).clamp(0.05, 0.95);
            let bound = (thresholds.lane_offset - TERMINAL_MARGIN - config.amplitude(rho)).max(0.0);
            let offset = (config.terminal_offset_noise.at(rho) * offset_z).clamp(-bound, bound);
            let profile =
                profile_for_support(from_c, to_c + offset, support, peak, skew, &thresholds)?;
            v.maneuver = Some(Maneuver {
                direction,
                to_lane,
                start: t_cross - profile.crossing_time(),
                profile,
                ramp_start: t_cross - config.speed_adaptation_lead,
                delta_v: config.lane_speed(to_lane, rho) - v.speed,
            });
        }

        for v in &vehicles {
            let mut samples = Vec::new();
            for f in 1..=frames {
                let t = f as f64 / fr;
                let (x, vx, ax) = v.longitudinal(t, config.speed_adaptation_time);
                if !(0.0..=len).contains(&x) {
                    continue;
                }
                let lat = v.lateral(t, &geo, config.keeping_damping);
                let lane = v.lane_at(t, lat.y, &geo);
                let y = lat.y + noise.sample(&mut rng);
                *counts.entry((direction, f)).or_default() += 1;
                let road = TrackSample {
                    frame: f,
                    vehicle_id: v.id,
                    x,
                    y,
                    vx,
                    vy: lat.vy,
                    ax,
                    ay: lat.ay,
                    jy: lat.jy,
                    lane_id: lane,
                    d_y_cl: y - geo.lane_center(lane).unwrap_or(y),
                    front_sight: len - x,
                    back_sight: x,
                    source_neighbors: [0; 8],
                };
                let raw = meta
                    .raw_lane(direction, lane)
                    .ok_or_else(|| Error::invalid(format!("lane {lane} outside the road")))?;
                let mut world = if direction.is_mirrored() {
                    mirror_sample(&road, x_center)
                } else {
                    road
                };
                world.lane_id = raw;
                samples.push(world);
            }
            if samples.is_empty() {
                continue;
            }
            let first = samples[0].frame;
            let last = samples[samples.len() - 1].frame;
            meta.vehicles.insert(
                v.id,
                VehicleMeta {
                    class: v.class,
                    direction,
                    initial_frame: first,
                    final_frame: last,
                },
            );
            if let Some(m) = &v.maneuver {
                let t_first = first as f64 / fr;
                let t_last = last as f64 / fr;
                let from_c = geo.lane_center(v.lane).unwrap_or(0.0);
                let to_c = geo.lane_center(m.to_lane).unwrap_or(0.0);
                let marking = 0.5 * (from_c + to_c);
                let rising = to_c > from_c;
                let lateral = |t: f64| v.lateral(t, &geo, config.keeping_damping);
                let t_cross = bisect(m.start, m.start + m.profile.duration, |t| {
                    (lateral(t).y >= marking) == rising
                });
                if t_cross < t_first || t_cross > t_last {
                    continue;
                }
                let active = |t: f64| {
                    let s = lateral(t);
                    let c = if t < t_cross { from_c } else { to_c };
                    thresholds.active(s.y - c, s.vy, s.ay, s.jy)
                };
                let Some((t_begin, t_end)) =
                    activity_support(active, t_cross, t_first - 10.0, t_last + 10.0)
                else {
                    continue;
                };
                let n = 2000;
                let max_abs_vy = (0..=n)
                    .map(|k| {
                        lateral(t_begin + (t_end - t_begin) * k as f64 / n as f64)
                            .vy
                            .abs()
                    })
                    .fold(0.0, f64::max);
                events.push((
                    direction,
                    ManifestEvent {
                        recording: id,
                        vehicle: v.id,
                        direction: m.direction.as_str().to_string(),
                        t_begin,
                        t_cross,
                        t_end,
                        duration: t_end - t_begin,
                        max_abs_vy,
                        density: f64::NAN,
                        truncated: t_begin < t_first || t_end > t_last,
                    },
                ));
            }
            tracks.push(Track {
                vehicle_id: v.id,
                class: v.class,
                direction,
                length: v.length,
                width: v.width,
                samples,
            });
        }
    }

    let lanes_of = |d: DrivingDirection| meta.lane_count(d);
    let mut density = Vec::new();
    for (&(direction, frame), &n) in &counts {
        density.push(ManifestDensity {
            recording: id,
            direction: direction.code(),
            frame,
            vehicles: n,
            density: traffic_density(n, len, lanes_of(direction))?,
        });
    }
    let lookup: BTreeMap<(u8, u32), f64> = density
        .iter()
        .map(|d| ((d.direction, d.frame), d.density))
        .collect();
    let events = events
        .into_iter()
        .map(|(direction, mut e)| {
            let frame = (e.t_cross * fr - 1e-9).ceil() as u32;
            e.density = lookup
                .get(&(direction.code(), frame))
                .copied()
                .unwrap_or(f64::NAN);
            e
        })
        .collect();
    tracks.sort_by_key(|t| t.vehicle_id);
    let targets: BTreeSet<u32> = tracks.iter().map(|t| t.vehicle_id).collect();
    Ok(GeneratedRecording {
        recording: Recording {
            meta,
            tracks,
            targets,
            frame: CoordinateFrame::World,
        },
        target_density,
        events,
        density,
    })
}

/// Generates `n_recordings` recordings with ids `1..=n` in parallel.
pub fn generate_recordings(
    config: &ScenarioConfig,
    n_recordings: usize,
) -> Result<Vec<GeneratedRecording>> {
    config.validate()?;
    (0..n_recordings)
        .into_par_iter()
        .map(|i| {
            generate_recording(
                config,
                i as u32 + 1,
                config.recording_density(i, n_recordings),
            )
        })
        .collect()
}

/// Writes highD file sets plus the event and density manifests into `dir`.
pub fn write_corpus(dir: &Path, corpus: &[GeneratedRecording]) -> Result<CorpusSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for g in corpus {
        write_recording(
            &g.recording,
            &RecordingFiles::in_dir(dir, g.recording.meta.id),
        )?;
    }
    write_tsv(
        &dir.join(EVENTS_FILE),
        corpus.iter().flat_map(|g| &g.events),
    )?;
    write_tsv(
        &dir.join(DENSITY_FILE),
        corpus.iter().flat_map(|g| &g.density),
    )?;
    Ok(summarize(corpus))
}

pub fn summarize(corpus: &[GeneratedRecording]) -> CorpusSummary {
    CorpusSummary {
        recordings: corpus
            .iter()
            .map(|g| {
                let achieved = g.achieved_density();
                RecordingSummary {
                    id: g.recording.meta.id,
                    target_density: g.target_density,
                    achieved_density: achieved,
                    within_tolerance: (achieved - g.target_density).abs() <= 0.1 * g.target_density,
                }
            })
            .collect(),
        events: corpus.iter().map(|g| g.events.len()).sum(),
        tracks: corpus.iter().map(|g| g.recording.tracks.len()).sum(),
    }
}

/// Generates and writes a corpus in one go.
pub fn generate_corpus(
    config: &ScenarioConfig,
    n_recordings: usize,
    dir: &Path,
) -> Result<CorpusSummary> {
    let corpus = generate_recordings(config, n_recordings)?;
    let summary = write_corpus(dir, &corpus)?;
    for r in summary.recordings.iter().filter(|r| !r.within_tolerance) {
        log::warn!(
            "recording {}: density {:.2} misses target {:.2} by more than 10%",
            r.id,
            r.achieved_density,
            r.target_density
        );
    }
    Ok(summary)
}

fn write_tsv<'a, T: Serialize + 'a>(path: &Path, rows: impl Iterator<Item = &'a T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .map_err(|e| Error::Csv {
            file: path.display().to_string(),
            source: e,
        })?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Csv {
            file: path.display().to_string(),
            source: e,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_tsv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .map_err(|e| Error::Csv {
            file: path.display().to_string(),
            source: e,
        })?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Csv {
                file: path.display().to_string(),
                source: e,
            })
        })
        .collect()
}

pub fn read_manifest_events(dir: &Path) -> Result<Vec<ManifestEvent>> {
    read_tsv(&dir.join(EVENTS_FILE))
}

pub fn read_manifest_density(dir: &Path) -> Result<Vec<ManifestDensity>> {
    read_tsv(&dir.join(DENSITY_FILE))
}
