//! End-to-end stages: dataset preparation, training, batch prediction and
//! the evaluation studies.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{LabeledSample, LaneChangeEvent, Maneuver, Recording, TrackKey};
use crate::error::{Error, Result};
use crate::evaluation::{
    argmax, bacc, density_bin_edges, lateral_errors, lc_stats_vs_density, one_vs_rest,
    stratify_by_density, summarize_time_gain, time_gain, BaccReport, BoxStats, DecisionRule,
    DensityBinStat, LcBinStat, RocCurve, TimeGainSummary,
};
use crate::experts::{
    build_expert_dataset, future_offsets, train_experts, ExpertConfig, HorizonGrid, ManeuverExpert,
};
use crate::features::{
    compute_lc_boundaries, detect_lane_changes, extract_features, ActivityThresholds, FeatureSchema,
};
use crate::ingest::{apply_sensor_model, SensorModel};
use crate::labeling::{
    compute_times, label_sample, split_folds, undersample, BalancedSet, SamplingPlan,
};
use crate::mlp::{train, ManeuverClassifier, TrainConfig, CLASSES};
use crate::moe::{cv_baseline, point_estimates, predict_distribution, predict_with_labels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepareConfig {
    pub sensor: SensorModel,
    /// Feature names; the default schema when empty.
    pub features: Vec<String>,
    /// Labeling horizon `T_H`, s.
    pub horizon: f64,
    pub grid_step: f64,
    pub folds: usize,
    /// Width of the time-to-event bins used for undersampling, s.
    pub bin_width: f64,
    /// Keep every n-th frame of each track.
    pub stride: usize,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            sensor: SensorModel::default(),
            features: Vec::new(),
            horizon: 5.0,
            grid_step: 0.2,
            folds: 6,
            bin_width: 0.5,
            stride: 1,
        }
    }
}

impl PrepareConfig {
    pub fn schema(&self) -> Result<FeatureSchema> {
        if self.features.is_empty() {
            Ok(FeatureSchema::default())
        } else {
            FeatureSchema::from_names(&self.features)
        }
    }

    pub fn grid(&self) -> Result<HorizonGrid> {
        HorizonGrid::new(self.grid_step, self.horizon)
    }
}

/// Every sample of every target track plus the detected lane changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub grid: HorizonGrid,
    pub horizon: f64,
    pub samples: Vec<LabeledSample>,
    pub events: Vec<LaneChangeEvent>,
    #[serde(with = "fold_pairs")]
    pub folds: BTreeMap<TrackKey, u8>,
}

/// Track keys are not strings, so the fold map is stored as pairs.
mod fold_pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::data_model::TrackKey;

    pub fn serialize<S: Serializer>(map: &BTreeMap<TrackKey, u8>, s: S) -> Result<S::Ok, S::Error> {
        map.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<TrackKey, u8>, D::Error> {
        Ok(Vec::<(TrackKey, u8)>::deserialize(d)?.into_iter().collect())
    }
}

impl Dataset {
    /// Admissible samples with a defined label outside `eval_fold`.
    pub fn training_samples(&self, eval_fold: u8) -> Vec<LabeledSample> {
        self.samples
            .iter()
            .filter(|s| s.admissible && s.label != Maneuver::Ndef && s.fold != eval_fold)
            .cloned()
            .collect()
    }

    pub fn label_counts(&self) -> BTreeMap<Maneuver, usize> {
        let mut m = BTreeMap::new();
        for s in self.samples.iter().filter(|s| s.admissible) {
            *m.entry(s.label).or_insert(0) += 1;
        }
        m
    }
}

struct TrackData {
    samples: Vec<LabeledSample>,
    events: Vec<LaneChangeEvent>,
}

fn prepare_recording(
    recording: &Recording,
    cfg: &PrepareConfig,
    schema: &FeatureSchema,
    grid: &HorizonGrid,
) -> Result<Vec<TrackData>> {
    let sensed = apply_sensor_model(recording, cfg.sensor)?;
    let meta = &sensed.recording.meta;
    let fr = meta.frame_rate;
    let thresholds = ActivityThresholds::default();
    let mut out = Vec::new();
    for (ti, track) in sensed.recording.tracks.iter().enumerate() {
        if !sensed.recording.targets.contains(&track.vehicle_id) || track.samples.is_empty() {
            continue;
        }
        let key = TrackKey {
            recording: meta.id,
            vehicle: track.vehicle_id,
        };
        let geo = meta.road_geometry(track.direction)?;
        let mut events = detect_lane_changes(track, key, &geo, fr);
        for e in &mut events {
            e.boundaries = compute_lc_boundaries(track, e.t_cross, fr, &thresholds);
            let frame = track.samples[e.frame_index].frame;
            e.traffic_density = sensed
                .density
                .get(&(track.direction, frame))
                .copied()
                .unwrap_or(0.0);
        }
        let last = track.samples[track.samples.len() - 1].frame as f64 / fr;
        let mut samples = Vec::new();
        for i in (0..track.samples.len()).step_by(cfg.stride.max(1)) {
            let s = &track.samples[i];
            let ctx = &sensed.contexts[ti][i];
            let time = s.frame as f64 / fr;
            let times = compute_times(time, last, &events);
            let center = geo.lane_center(s.lane_id).ok_or_else(|| {
                Error::invalid(format!(
                    "{key}: lane {} outside the road at frame {}",
                    s.lane_id, s.frame
                ))
            })?;
            samples.push(LabeledSample {
                id: 0,
                track: key,
                frame: s.frame,
                time,
                features: extract_features(track, s.frame, ctx, schema)?,
                label: label_sample(&times, cfg.horizon)?,
                times,
                fold: 0,
                traffic_density: sensed
                    .density
                    .get(&(track.direction, s.frame))
                    .copied()
                    .unwrap_or(0.0),
                admissible: sensed.admissible[ti][i],
                d_y_cl: s.d_y_cl,
                v_y: s.vy,
                future: future_offsets(track, i, center, grid, fr),
            });
        }
        out.push(TrackData { samples, events });
    }
    Ok(out)
}

/// Features, labels, futures and folds for all target tracks of road-frame
/// recordings.
pub fn prepare(recordings: &[Recording], cfg: &PrepareConfig, seed: u64) -> Result<Dataset> {
    let schema = cfg.schema()?;
    let grid = cfg.grid()?;
    let per_recording: Vec<Vec<TrackData>> = recordings
        .par_iter()
        .map(|r| prepare_recording(r, cfg, &schema, &grid))
        .collect::<Result<_>>()?;
    let tracks: Vec<TrackData> = per_recording.into_iter().flatten().collect();
    let keys: BTreeSet<TrackKey> = tracks
        .iter()
        .filter_map(|t| t.samples.first().map(|s| s.track))
        .collect();
    let folds = split_folds(&keys, cfg.folds, seed)?;
    let mut samples = Vec::new();
    let mut events = Vec::new();
    for t in tracks {
        events.extend(t.events);
        samples.extend(t.samples);
    }
    for (i, s) in samples.iter_mut().enumerate() {
        s.id = i as u64;
        s.fold = folds[&s.track];
    }
    Ok(Dataset {
        schema,
        grid,
        horizon: cfg.horizon,
        samples,
        events,
        folds,
    })
}

/// Gate and experts trained together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModels {
    pub classifier: ManeuverClassifier,
    pub experts: [ManeuverExpert; CLASSES],
    pub grid: HorizonGrid,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub gate: TrainConfig,
    pub experts: ExpertConfig,
}

/// Balanced training set of the folds other than `eval_fold`.
pub fn balanced_training_set(
    dataset: &Dataset,
    eval_fold: u8,
    bin_width: f64,
    seed: u64,
) -> Result<(Vec<LabeledSample>, BalancedSet)> {
    let pool = dataset.training_samples(eval_fold);
    if pool.is_empty() {
        return Err(Error::invalid(format!(
            "no admissible labeled samples outside fold {eval_fold}"
        )));
    }
    let plan = SamplingPlan {
        horizon: dataset.horizon,
        bin_width,
        seed,
    };
    let set = undersample(&pool, &plan)?;
    for w in &set.warnings {
        log::warn!("{w}");
    }
    Ok((pool, set))
}

/// Trains the gate and the three experts on the balanced set.
pub fn train_models(
    pool: &[LabeledSample],
    set: &BalancedSet,
    schema: &FeatureSchema,
    grid: &HorizonGrid,
    settings: &TrainSettings,
    seed: u64,
) -> Result<TrainedModels> {
    let chosen: Vec<&LabeledSample> = set.indices.iter().map(|&i| &pool[i]).collect();
    let features: Vec<Vec<f64>> = chosen.iter().map(|s| s.features.clone()).collect();
    let labels: Vec<Maneuver> = chosen.iter().map(|s| s.label).collect();
    log::info!("training gate on {} samples", chosen.len());
    let classifier = train(&features, &labels, schema, &settings.gate, seed)?;
    let by_class: Vec<Vec<Vec<f64>>> = Maneuver::DEFINED
        .iter()
        .map(|m| {
            let of_class: Vec<&LabeledSample> =
                chosen.iter().copied().filter(|s| s.label == *m).collect();
            build_expert_dataset(&of_class, grid)
        })
        .collect();
    let experts = train_experts(
        [&by_class[0], &by_class[1], &by_class[2]],
        &settings.experts,
        seed,
    )?;
    Ok(TrainedModels {
        classifier,
        experts,
        grid: *grid,
    })
}

/// One sample of the evaluation fold. Prediction columns are empty for
/// samples that are not evaluated (inadmissible or undefined label); their
/// gate output still feeds the time-gain study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub sample: u64,
    pub track: TrackKey,
    pub frame: u32,
    pub time: f64,
    pub label: Maneuver,
    pub evaluated: bool,
    pub density: f64,
    pub gate: [f64; CLASSES],
    pub truth: Vec<Option<f64>>,
    pub moe: Vec<f64>,
    pub labels: Vec<f64>,
    pub cv: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTable {
    pub eval_fold: u8,
    pub horizons: Vec<f64>,
    pub rows: Vec<PredictionRow>,
    /// Lane changes of all folds.
    pub events: Vec<LaneChangeEvent>,
}

pub fn predict(
    dataset: &Dataset,
    models: &TrainedModels,
    eval_fold: u8,
) -> Result<PredictionTable> {
    if models.classifier.schema != dataset.schema {
        return Err(Error::SchemaMismatch(
            "model and dataset use different feature schemas".into(),
        ));
    }
    let horizons = models.grid.times();
    let h = models.grid.horizon;
    let rows: Vec<PredictionRow> = dataset
        .samples
        .par_iter()
        .filter(|s| s.fold == eval_fold)
        .map(|s| {
            let evaluated = s.admissible && s.label != Maneuver::Ndef;
            let (gate, moe, labels, cv) = if evaluated {
                let p = predict_distribution(&s.features, &models.classifier, &models.experts)?;
                let l =
                    predict_with_labels(&s.features, s.label, &models.classifier, &models.experts)?;
                (
                    p.gate,
                    point_estimates(&p, &horizons, h)?,
                    point_estimates(&l, &horizons, h)?,
                    horizons
                        .iter()
                        .map(|&t| cv_baseline(s.d_y_cl, s.v_y, t))
                        .collect(),
                )
            } else {
                (
                    models.classifier.predict(&s.features)?,
                    Vec::new(),
                    Vec::new(),
                    Vec::new(),
                )
            };
            Ok(PredictionRow {
                sample: s.id,
                track: s.track,
                frame: s.frame,
                time: s.time,
                label: s.label,
                evaluated,
                density: s.traffic_density,
                gate,
                truth: s.future.clone(),
                moe,
                labels,
                cv,
            })
        })
        .collect::<Result<_>>()?;
    if !rows.iter().any(|r| r.evaluated) {
        return Err(Error::invalid(format!(
            "fold {eval_fold} holds no evaluable samples"
        )));
    }
    Ok(PredictionTable {
        eval_fold,
        horizons,
        rows,
        events: dataset.events.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub maneuver: Maneuver,
    pub roc: RocCurve,
    /// Lane-change classes only.
    pub time_gain: Option<TimeGainSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodErrors {
    pub method: String,
    pub summaries: Vec<Option<BoxStats>>,
    pub skipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub samples: usize,
    pub classes: Vec<ClassReport>,
    pub bacc: BaccReport,
    pub horizons: Vec<f64>,
    pub errors: Vec<MethodErrors>,
    /// Lane changes whose crossing lies outside the observed frames.
    pub time_gain_skipped: usize,
}

impl EvaluationReport {
    pub fn auc(&self, m: Maneuver) -> Option<f64> {
        self.classes
            .iter()
            .find(|c| c.maneuver == m)
            .map(|c| c.roc.auc)
    }

    pub fn method(&self, name: &str) -> Option<&MethodErrors> {
        self.errors.iter().find(|e| e.method == name)
    }

    /// Median error of `method` at the last horizon.
    pub fn final_median(&self, method: &str) -> Option<f64> {
        self.method(method)?
            .summaries
            .last()
            .copied()
            .flatten()
            .map(|b| b.median)
    }
}

pub const METHODS: [&str; 3] = ["MoE", "Labels", "CV"];

fn method_column(r: &PredictionRow, method: &str) -> Vec<Option<f64>> {
    let v = match method {
        "MoE" => &r.moe,
        "Labels" => &r.labels,
        _ => &r.cv,
    };
    v.iter().map(|x| Some(*x)).collect()
}

pub fn evaluate(table: &PredictionTable, rule: DecisionRule) -> Result<EvaluationReport> {
    let rows: Vec<&PredictionRow> = table.rows.iter().filter(|r| r.evaluated).collect();
    let probs: Vec<[f64; CLASSES]> = rows.iter().map(|r| r.gate).collect();
    let truth: Vec<Maneuver> = rows.iter().map(|r| r.label).collect();
    let rocs = one_vs_rest(&probs, &truth)?;
    let predicted: Vec<Maneuver> = probs.iter().map(|p| Maneuver::DEFINED[argmax(p)]).collect();
    let bacc = bacc(&predicted, &truth)?;

    let mut sequences: BTreeMap<TrackKey, Vec<(f64, [f64; CLASSES])>> = BTreeMap::new();
    for r in &table.rows {
        sequences.entry(r.track).or_default().push((r.time, r.gate));
    }
    sequences
        .values_mut()
        .for_each(|v| v.sort_by(|a, b| a.0.total_cmp(&b.0)));
    let horizon = table.horizons.last().copied().unwrap_or(5.0);
    let mut gains: BTreeMap<Maneuver, Vec<f64>> = BTreeMap::new();
    let mut skipped = 0;
    for e in &table.events {
        let Some(seq) = sequences.get(&e.track) else {
            continue;
        };
        match time_gain(seq, e.direction.maneuver(), e.t_cross, horizon, rule) {
            Ok(g) => gains.entry(e.direction.maneuver()).or_default().push(g),
            Err(_) => skipped += 1,
        }
    }
    let classes = Maneuver::DEFINED
        .iter()
        .zip(rocs)
        .map(|(&m, roc)| ClassReport {
            maneuver: m,
            roc,
            time_gain: gains.get(&m).and_then(|g| summarize_time_gain(g)),
        })
        .collect();

    let truths: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.truth.clone()).collect();
    let errors = METHODS
        .iter()
        .map(|&m| {
            let pred: Vec<Vec<Option<f64>>> = rows.iter().map(|r| method_column(r, m)).collect();
            let e = lateral_errors(&pred, &truths, table.horizons.len())?;
            Ok(MethodErrors {
                method: m.to_string(),
                summaries: e.summaries(),
                skipped: e.skipped,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvaluationReport {
        samples: rows.len(),
        classes,
        bacc,
        horizons: table.horizons.clone(),
        errors,
        time_gain_skipped: skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextReport {
    pub bin_width: f64,
    /// MoE error at the last horizon per class and density bin.
    pub density_errors: Vec<DensityBinStat>,
    pub lane_changes: Vec<LcBinStat>,
}

pub fn context_report(table: &PredictionTable, bin_width: f64) -> Result<ContextReport> {
    let last = table
        .horizons
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::invalid("empty horizon grid"))?;
    let records: Vec<(f64, Maneuver, f64)> = table
        .rows
        .iter()
        .filter(|r| r.evaluated)
        .filter_map(|r| {
            Some((
                r.density,
                r.label,
                (r.moe.get(last)? - r.truth.get(last).copied().flatten()?).abs(),
            ))
        })
        .collect();
    let density_errors = if records.is_empty() {
        Vec::new()
    } else {
        let d: Vec<f64> = records.iter().map(|r| r.0).collect();
        stratify_by_density(&records, &density_bin_edges(&d, bin_width)?)?
    };
    let events: Vec<&LaneChangeEvent> = table
        .events
        .iter()
        .filter(|e| e.boundaries.is_some_and(|b| !b.truncated))
        .collect();
    let lane_changes = if events.is_empty() {
        Vec::new()
    } else {
        let d: Vec<f64> = events.iter().map(|e| e.traffic_density).collect();
        lc_stats_vs_density(&table.events, &density_bin_edges(&d, bin_width)?)?
    };
    Ok(ContextReport {
        bin_width,
        density_errors,
        lane_changes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{filter_cars, normalize_direction};
    use crate::synth::{generate_recordings, ScenarioConfig};

    fn corpus() -> Vec<Recording> {
        let cfg = ScenarioConfig {
            recording_duration: 40.0,
            segment_length: 500.0,
            ..Default::default()
        };
        generate_recordings(&cfg, 2)
            .unwrap()
            .iter()
            .map(|g| filter_cars(&normalize_direction(&g.recording).unwrap()))
            .collect()
    }

    #[test]
    fn prepare_assigns_folds_by_track() {
        let recs = corpus();
        let cfg = PrepareConfig {
            stride: 5,
            ..Default::default()
        };
        let ds = prepare(&recs, &cfg, 3).unwrap();
        assert!(!ds.samples.is_empty());
        for s in &ds.samples {
            assert_eq!(s.fold, ds.folds[&s.track]);
            assert!((1..=6).contains(&s.fold));
            assert_eq!(s.features.len(), ds.schema.len());
            assert_eq!(s.future.len(), 25);
        }
        let counts = ds.label_counts();
        assert!(counts.get(&Maneuver::Lcl).copied().unwrap_or(0) > 0);
        assert!(counts.get(&Maneuver::Lcr).copied().unwrap_or(0) > 0);
        assert!(ds.events.iter().all(|e| e.traffic_density > 0.0));
        // identical under seed
        assert_eq!(ds, prepare(&recs, &cfg, 3).unwrap());
    }

    #[test]
    fn lane_change_samples_precede_their_crossing() {
        let ds = prepare(
            &corpus(),
            &PrepareConfig {
                stride: 3,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        for s in ds.samples.iter().filter(|s| s.label == Maneuver::Lcl) {
            let t = s.times.lcl.finite().unwrap();
            assert!((0.0..=5.0).contains(&t));
            assert!(ds
                .events
                .iter()
                .any(|e| e.track == s.track && (e.t_cross - s.time - t).abs() < 1e-9));
        }
    }

    #[test]
    fn prediction_requires_matching_schema() {
        let recs = corpus();
        let ds = prepare(
            &recs,
            &PrepareConfig {
                stride: 4,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let other = PrepareConfig {
            stride: 4,
            features: vec!["d_y_cl".into(), "v_y".into()],
            ..Default::default()
        };
        let ds2 = prepare(&recs, &other, 0).unwrap();
        let (pool, set) = balanced_training_set(&ds2, 6, 0.5, 0).unwrap();
        let settings = TrainSettings {
            gate: TrainConfig {
                max_epochs: 2,
                ..Default::default()
            },
            experts: ExpertConfig {
                max_components: 2,
                max_points: 2000,
                ..Default::default()
            },
        };
        let models = train_models(&pool, &set, &ds2.schema, &ds2.grid, &settings, 0).unwrap();
        assert!(matches!(
            predict(&ds, &models, 6),
            Err(Error::SchemaMismatch(_))
        ));
        let table = predict(&ds2, &models, 6).unwrap();
        assert!(table.rows.iter().all(|r| r.track.recording >= 1));
        let report = evaluate(&table, DecisionRule::Argmax).unwrap();
        assert_eq!(report.errors.len(), 3);
        assert_eq!(report.horizons.len(), 25);
        let ctx = context_report(&table, 1.0).unwrap();
        let n: usize = ctx.density_errors.iter().map(|b| b.count).sum();
        let covered = table
            .rows
            .iter()
            .filter(|r| r.evaluated && r.truth[24].is_some())
            .count();
        assert_eq!(n, covered);
        assert_eq!(
            report.method("MoE").unwrap().skipped[24],
            report.samples - covered
        );
    }
}
