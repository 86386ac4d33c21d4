//! Per-maneuver mixture experts over (v_y, d_y_cl, y, t).

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{LabeledSample, Maneuver, Track};
use crate::error::{Error, Result};
use crate::gmm::{select_kernels, EmConfig, GaussianMixture, SelectionStep, MAX_COMPONENTS};

pub const EXPERT_DIMS: [&str; 4] = ["v_y", "d_y_cl", "y", "t"];

/// Prediction horizons `step, 2*step, ..., horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonGrid {
    pub step: f64,
    pub horizon: f64,
}

impl Default for HorizonGrid {
    fn default() -> Self {
        Self {
            step: 0.2,
            horizon: 5.0,
        }
    }
}

impl HorizonGrid {
    pub fn new(step: f64, horizon: f64) -> Result<Self> {
        let n = horizon / step;
        if !(step > 0.0 && horizon > 0.0) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "grid step {step} must divide horizon {horizon}"
            )));
        }
        Ok(Self { step, horizon })
    }

    pub fn len(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn times(&self) -> Vec<f64> {
        (1..=self.len()).map(|k| k as f64 * self.step).collect()
    }

    /// Index of the grid point equal to `t`, if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.step).round();
        ((t / self.step - k).abs() < 1e-6 && k >= 1.0 && k as usize <= self.len())
            .then(|| k as usize - 1)
    }
}

/// Lateral position of `track` at `time`, linearly interpolated between
/// frames; `None` outside the observed interval.
pub fn position_at(track: &Track, time: f64, frame_rate: f64) -> Option<f64> {
    let f = time * frame_rate;
    let s = &track.samples;
    let first = s.first()?.frame as f64;
    let last = s.last()?.frame as f64;
    if f < first - 1e-6 || f > last + 1e-6 {
        return None;
    }
    let i = s.partition_point(|x| (x.frame as f64) < f - 1e-6);
    let hi = &s[i.min(s.len() - 1)];
    if (hi.frame as f64 - f).abs() < 1e-6 || i == 0 {
        return Some(hi.y);
    }
    let lo = &s[i - 1];
    let u = (f - lo.frame as f64) / (hi.frame as f64 - lo.frame as f64);
    Some(lo.y + u * (hi.y - lo.y))
}

/// Future lateral offsets relative to the lane center occupied at sample
/// `index`, one entry per grid horizon.
pub fn future_offsets(
    track: &Track,
    index: usize,
    lane_center: f64,
    grid: &HorizonGrid,
    frame_rate: f64,
) -> Vec<Option<f64>> {
    let now = track.samples[index].frame as f64 / frame_rate;
    grid.times()
        .into_iter()
        .map(|t| position_at(track, now + t, frame_rate).map(|y| y - lane_center))
        .collect()
}

/// One point (v_y, d_y_cl, y, t) per sample and covered grid horizon.
pub fn build_expert_dataset(samples: &[&LabeledSample], grid: &HorizonGrid) -> Vec<Vec<f64>> {
    let times = grid.times();
    let mut out = Vec::new();
    for s in samples {
        for (t, y) in times.iter().zip(&s.future) {
            if let Some(y) = y {
                out.push(vec![s.v_y, s.d_y_cl, *y, *t]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertConfig {
    pub max_components: usize,
    /// Points are subsampled to at most this many before fitting.
    pub max_points: usize,
    /// Half-width of the uniform jitter added to t while fitting, s.
    pub time_jitter: f64,
    pub em: EmConfig,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            max_components: MAX_COMPONENTS,
            max_points: 20_000,
            time_jitter: 0.1,
            em: EmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverExpert {
    pub maneuver: Maneuver,
    pub dims: Vec<String>,
    pub mixture: GaussianMixture,
    pub log_likelihood: f64,
    pub selection: Vec<SelectionStep>,
    pub points_used: usize,
}

impl ManeuverExpert {
    /// Predictive mixture over (y, t) given the current lateral state.
    pub fn condition(&self, v_y: f64, d_y_cl: f64) -> Result<GaussianMixture> {
        self.mixture.condition(&[0, 1], &[v_y, d_y_cl])
    }
}

pub fn fit_expert(
    maneuver: Maneuver,
    points: &[Vec<f64>],
    config: &ExpertConfig,
    seed: u64,
) -> Result<ManeuverExpert> {
    if maneuver == Maneuver::Ndef {
        return Err(Error::invalid("no expert for undefined samples"));
    }
    if points.iter().any(|p| p.len() != 4) {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: points
                .iter()
                .map(|p| p.len())
                .find(|&l| l != 4)
                .unwrap_or(0),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = if points.len() > config.max_points {
        sample_indices(&mut rng, points.len(), config.max_points).into_vec()
    } else {
        (0..points.len()).collect()
    };
    chosen.sort_unstable();
    let data: Vec<Vec<f64>> = chosen
        .iter()
        .map(|&i| {
            let mut p = points[i].clone();
            if config.time_jitter > 0.0 {
                p[3] += rng.random_range(-config.time_jitter..config.time_jitter);
            }
            p
        })
        .collect();
    let sel = select_kernels(&data, config.max_components, &config.em, seed)?;
    log::info!(
        "{maneuver} expert: {} components from {} points",
        sel.fit.mixture.len(),
        data.len()
    );
    Ok(ManeuverExpert {
        maneuver,
        dims: EXPERT_DIMS.iter().map(|s| s.to_string()).collect(),
        log_likelihood: sel.fit.final_log_likelihood(),
        mixture: sel.fit.mixture,
        selection: sel.trace,
        points_used: data.len(),
    })
}

/// Fits the LCL, FLW and LCR experts concurrently.
pub fn train_experts(
    points: [&[Vec<f64>]; 3],
    config: &ExpertConfig,
    seed: u64,
) -> Result<[ManeuverExpert; 3]> {
    let results: Vec<Result<ManeuverExpert>> = std::thread::scope(|scope| {
        let handles: Vec<_> = Maneuver::DEFINED
            .iter()
            .zip(points)
            .enumerate()
            .map(|(i, (&m, pts))| {
                scope.spawn(move || fit_expert(m, pts, config, seed.wrapping_add(1000 * i as u64)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Numerical("expert training panicked".into())))
            })
            .collect()
    });
    let mut it = results.into_iter();
    let mut next = || {
        it.next()
            .unwrap_or_else(|| Err(Error::Numerical("missing expert".into())))
    };
    Ok([next()?, next()?, next()?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{
        DrivingDirection, EventTime, TimeToEvents, TrackKey, TrackSample, VehicleClass,
    };

    fn track(ys: impl Fn(f64) -> f64, seconds: f64) -> Track {
        let n = (seconds * 25.0) as u32 + 1;
        Track {
            vehicle_id: 1,
            class: VehicleClass::Car,
            direction: DrivingDirection::Lower,
            length: 4.5,
            width: 1.8,
            samples: (0..n)
                .map(|f| TrackSample {
                    frame: f,
                    vehicle_id: 1,
                    x: f as f64,
                    y: ys(f as f64 / 25.0),
                    vx: 30.0,
                    vy: 0.0,
                    ax: 0.0,
                    ay: 0.0,
                    jy: 0.0,
                    lane_id: 1,
                    d_y_cl: 0.0,
                    front_sight: 200.0,
                    back_sight: 200.0,
                    source_neighbors: [0; 8],
                })
                .collect(),
        }
    }

    fn labeled(future: Vec<Option<f64>>) -> LabeledSample {
        LabeledSample {
            id: 0,
            track: TrackKey {
                recording: 1,
                vehicle: 1,
            },
            frame: 0,
            time: 0.0,
            features: vec![],
            label: Maneuver::Flw,
            times: TimeToEvents {
                lcl: EventTime::Never,
                lcr: EventTime::Never,
                observed: 10.0,
            },
            fold: 1,
            traffic_density: 0.0,
            admissible: true,
            d_y_cl: 0.0,
            v_y: 0.0,
            future,
        }
    }

    #[test]
    fn full_future_gives_25_points() {
        let grid = HorizonGrid::default();
        let tr = track(|_| 1.875, 10.0);
        let fut = future_offsets(&tr, 0, 1.875, &grid, 25.0);
        assert_eq!(fut.len(), 25);
        let s = labeled(fut);
        let pts = build_expert_dataset(&[&s], &grid);
        assert_eq!(pts.len(), 25);
        assert!(pts.iter().all(|p| p[2].abs() < 1e-12));
        assert!((pts[24][3] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_future_emits_covered_points() {
        let grid = HorizonGrid::default();
        let tr = track(|_| 0.0, 3.0);
        let s = labeled(future_offsets(&tr, 0, 0.0, &grid, 25.0));
        assert_eq!(build_expert_dataset(&[&s], &grid).len(), 15);
    }

    #[test]
    fn completed_left_change_ends_one_lane_over() {
        let w = 3.75;
        let y = |t: f64| 1.875 + w * ((t - 1.0) / 3.0).clamp(0.0, 1.0);
        let tr = track(y, 8.0);
        let fut = future_offsets(&tr, 0, 1.875, &HorizonGrid::default(), 25.0);
        assert!((fut[24].unwrap() - w).abs() < 1e-12);
    }

    #[test]
    fn grid_indexing() {
        let g = HorizonGrid::default();
        assert_eq!(g.index_of(5.0), Some(24));
        assert_eq!(g.index_of(0.2), Some(0));
        assert_eq!(g.index_of(0.3), None);
        assert!(HorizonGrid::new(0.3, 5.0).is_err());
    }

    #[test]
    fn experts_fit_in_parallel() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let make = |offset: f64, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..400)
                .map(|_| {
                    let t = rng.random_range(0.2..5.0);
                    let v: f64 = rng.random_range(-0.3..0.3);
                    vec![v, rng.random_range(-0.5..0.5), offset * t / 5.0 + v * t, t]
                })
                .collect()
        };
        let a = make(3.0, &mut rng);
        let b = make(0.0, &mut rng);
        let c = make(-3.0, &mut rng);
        let cfg = ExpertConfig {
            max_components: 4,
            ..Default::default()
        };
        let experts = train_experts([&a, &b, &c], &cfg, 1).unwrap();
        assert_eq!(experts[0].maneuver, Maneuver::Lcl);
        assert_eq!(experts[2].maneuver, Maneuver::Lcr);
        let cond = experts[0]
            .condition(0.0, 0.0)
            .unwrap()
            .condition(&[1], &[5.0])
            .unwrap();
        assert!((cond.mean()[0] - 3.0).abs() < 0.5, "{:?}", cond.mean());
        let again = train_experts([&a, &b, &c], &cfg, 1).unwrap();
        assert_eq!(experts, again);
    }
}
