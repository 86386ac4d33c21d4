//! Maneuver labels, fold assignment and class/time balanced undersampling.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{
    EventTime, LabeledSample, LaneChangeDirection, LaneChangeEvent, Maneuver, TimeToEvents,
    TrackKey,
};
use crate::error::{Error, Result};

/// Times from `now` to the next left and right crossing and to the end of
/// the observation. Crossings at `now` count as upcoming.
pub fn compute_times(now: f64, last_observed: f64, events: &[LaneChangeEvent]) -> TimeToEvents {
    let next = |dir: LaneChangeDirection| {
        events
            .iter()
            .filter(|e| e.direction == dir && e.t_cross >= now)
            .map(|e| e.t_cross - now)
            .min_by(f64::total_cmp)
            .map_or(EventTime::Never, EventTime::At)
    };
    TimeToEvents {
        lcl: next(LaneChangeDirection::Left),
        lcr: next(LaneChangeDirection::Right),
        observed: (last_observed - now).max(0.0),
    }
}

/// Maneuver label within horizon `t_h`. Left wins ties with right.
pub fn label_sample(times: &TimeToEvents, t_h: f64) -> Result<Maneuver> {
    let negative = |t: EventTime| t.finite().is_some_and(|v| v < 0.0);
    if negative(times.lcl) || negative(times.lcr) || times.observed < 0.0 {
        return Err(Error::invalid(format!(
            "negative time in labeling input ({}, {}, {})",
            times.lcl, times.lcr, times.observed
        )));
    }
    let h = EventTime::At(t_h);
    let o = EventTime::At(times.observed);
    let (l, r) = (times.lcl, times.lcr);
    Ok(if l.le(h) && l.le(r) && l.le(o) {
        Maneuver::Lcl
    } else if r.le(h) && r.lt(l) && r.le(o) {
        Maneuver::Lcr
    } else if h.lt(l) && h.lt(r) && h.le(o) {
        Maneuver::Flw
    } else {
        Maneuver::Ndef
    })
}

/// Assigns each track to one of `k` folds (1-based). Tracks are shuffled
/// with `seed` and dealt round-robin, so fold sizes differ by at most one.
pub fn split_folds(
    tracks: &BTreeSet<TrackKey>,
    k: usize,
    seed: u64,
) -> Result<BTreeMap<TrackKey, u8>> {
    if k == 0 || k > u8::MAX as usize {
        return Err(Error::invalid(format!(
            "fold count must be in 1..=255, got {k}"
        )));
    }
    if tracks.len() < k {
        return Err(Error::invalid(format!(
            "cannot split {} tracks into {k} folds",
            tracks.len()
        )));
    }
    let mut order: Vec<TrackKey> = tracks.iter().copied().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, key)| (key, (i % k) as u8 + 1))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub horizon: f64,
    pub bin_width: f64,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            bin_width: 0.5,
            seed: 0,
        }
    }
}

impl SamplingPlan {
    pub fn validate(&self) -> Result<()> {
        let n = self.horizon / self.bin_width;
        if !(self.horizon > 0.0 && self.bin_width > 0.0) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "bin width {} must divide the horizon {}",
                self.bin_width, self.horizon
            )));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        (self.horizon / self.bin_width).round() as usize
    }

    /// Bin of a time-to-event in `[0, horizon]`; bin `i` covers
    /// `(i*w, (i+1)*w]` and time zero falls into the first bin.
    pub fn bin_of(&self, t: f64) -> Option<usize> {
        if !(0.0..=self.horizon + 1e-9).contains(&t) {
            return None;
        }
        let b = (t / self.bin_width - 1e-9).ceil() as i64 - 1;
        Some(b.clamp(0, self.bin_count() as i64 - 1) as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedSet {
    /// Indices into the input slice, ascending.
    pub indices: Vec<usize>,
    /// Retained samples per lane-change cell.
    pub per_cell: usize,
    /// Bins that were kept for both lane-change classes.
    pub bins: Vec<usize>,
    pub warnings: Vec<String>,
}

fn time_to(sample: &LabeledSample, class: Maneuver) -> Option<f64> {
    match class {
        Maneuver::Lcl => sample.times.lcl.finite(),
        Maneuver::Lcr => sample.times.lcr.finite(),
        _ => None,
    }
}

/// Random undersampling to equal counts in every (lane-change class,
/// time-to-event bin) cell and an FLW total equal to each lane-change class
/// total. A bin empty in either lane-change class is reported and dropped
/// from both.
pub fn undersample(samples: &[LabeledSample], plan: &SamplingPlan) -> Result<BalancedSet> {
    plan.validate()?;
    let n_bins = plan.bin_count();
    let mut cells: BTreeMap<(Maneuver, usize), Vec<usize>> = BTreeMap::new();
    let mut flw = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        match s.label {
            Maneuver::Lcl | Maneuver::Lcr => {
                let t = time_to(s, s.label).ok_or_else(|| {
                    Error::invalid(format!(
                        "sample {} labeled {} has no event time",
                        s.id, s.label
                    ))
                })?;
                if let Some(b) = plan.bin_of(t) {
                    cells.entry((s.label, b)).or_default().push(i);
                }
            }
            Maneuver::Flw => flw.push(i),
            Maneuver::Ndef => {
                return Err(Error::invalid(format!(
                    "sample {} is undefined and cannot be balanced",
                    s.id
                )))
            }
        }
    }
    let mut warnings = Vec::new();
    let mut bins = Vec::new();
    for b in 0..n_bins {
        let lo = b as f64 * plan.bin_width;
        let hi = lo + plan.bin_width;
        let mut ok = true;
        for class in [Maneuver::Lcl, Maneuver::Lcr] {
            if cells.get(&(class, b)).is_none_or(|v| v.is_empty()) {
                warnings.push(format!("empty cell {class} ({lo:.2}, {hi:.2}] s"));
                ok = false;
            }
        }
        if ok {
            bins.push(b);
        }
    }
    for w in &warnings {
        log::warn!("undersampling: {w}");
    }
    let min_cell = bins
        .iter()
        .flat_map(|&b| [Maneuver::Lcl, Maneuver::Lcr].map(|c| cells[&(c, b)].len()))
        .min()
        .unwrap_or(0);
    let per_cell = if bins.is_empty() {
        0
    } else {
        min_cell.min(flw.len() / bins.len())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut indices = Vec::new();
    for &b in &bins {
        for class in [Maneuver::Lcl, Maneuver::Lcr] {
            let mut cell = cells[&(class, b)].clone();
            cell.shuffle(&mut rng);
            indices.extend_from_slice(&cell[..per_cell]);
        }
    }
    flw.shuffle(&mut rng);
    indices.extend_from_slice(&flw[..per_cell * bins.len()]);
    indices.sort_unstable();
    Ok(BalancedSet {
        indices,
        per_cell,
        bins,
        warnings,
    })
}

/// Audit table of a balanced set: one row per retained sample.
pub fn write_sampling_manifest<W: Write>(
    out: &mut W,
    samples: &[LabeledSample],
    set: &BalancedSet,
) -> std::io::Result<()> {
    writeln!(out, "sample_id\ttrack\tfold\tlabel\tt_lcl\tt_lcr\tt_o")?;
    for &i in &set.indices {
        let s = &samples[i];
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.id, s.track, s.fold, s.label, s.times.lcl, s.times.lcr, s.times.observed
        )?;
    }
    Ok(())
}
