//! Classification and prediction metrics and the density studies.

use serde::{Deserialize, Serialize};

use crate::data_model::{LaneChangeEvent, Maneuver};
use crate::error::{Error, Result};
use crate::mlp::CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC by sweeping the distinct scores from high to low; AUC by the
/// trapezoid rule, which counts tied positive/negative pairs as one half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<RocCurve> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: positive.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid(
            "ROC needs at least one positive and one negative",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let thr = scores[order[i]];
        while i < order.len() && scores[order[i]] == thr {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().unwrap_or(&points[0]);
        let p = RocPoint {
            threshold: thr,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

/// One-vs-rest curves for (LCL, FLW, LCR).
pub fn one_vs_rest(probs: &[[f64; CLASSES]], truth: &[Maneuver]) -> Result<Vec<RocCurve>> {
    Maneuver::DEFINED
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let scores: Vec<f64> = probs.iter().map(|p| p[k]).collect();
            let pos: Vec<bool> = truth.iter().map(|&t| t == m).collect();
            roc_auc(&scores, &pos)
        })
        .collect()
}

pub fn argmax(p: &[f64; CLASSES]) -> usize {
    let mut best = 0;
    for k in 1..CLASSES {
        if p[k] > p[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaccReport {
    pub value: f64,
    pub recalls: [Option<f64>; CLASSES],
    /// Classes absent from the truth, left out of the mean.
    pub excluded: Vec<Maneuver>,
    /// Rows: truth, columns: prediction.
    pub confusion: [[usize; CLASSES]; CLASSES],
}

pub fn bacc(predicted: &[Maneuver], truth: &[Maneuver]) -> Result<BaccReport> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    let mut confusion = [[0usize; CLASSES]; CLASSES];
    for (p, t) in predicted.iter().zip(truth) {
        let (Some(pi), Some(ti)) = (p.index(), t.index()) else {
            return Err(Error::invalid("undefined label in balanced accuracy input"));
        };
        confusion[ti][pi] += 1;
    }
    bacc_from_confusion(&confusion)
}

pub fn bacc_from_confusion(confusion: &[[usize; CLASSES]; CLASSES]) -> Result<BaccReport> {
    let mut recalls = [None; CLASSES];
    let mut excluded = Vec::new();
    for (k, row) in confusion.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total == 0 {
            excluded.push(Maneuver::DEFINED[k]);
        } else {
            recalls[k] = Some(row[k] as f64 / total as f64);
        }
    }
    let present: Vec<f64> = recalls.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::invalid("balanced accuracy of an empty set"));
    }
    Ok(BaccReport {
        value: present.iter().sum::<f64>() / present.len() as f64,
        recalls,
        excluded,
        confusion: *confusion,
    })
}

/// How a stable decision is recognized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DecisionRule {
    Argmax,
    /// The true class needs at least this probability.
    Threshold(f64),
}

/// Time between the onset of a stable correct decision and the crossing.
/// `frames` holds (time, gate output) in time order; only frames in
/// `[t_cross - horizon, t_cross]` are considered.
pub fn time_gain(
    frames: &[(f64, [f64; CLASSES])],
    class: Maneuver,
    t_cross: f64,
    horizon: f64,
    rule: DecisionRule,
) -> Result<f64> {
    let k = class
        .index()
        .ok_or_else(|| Error::invalid("time gain needs a defined class"))?;
    let (Some(first), Some(last)) = (frames.first(), frames.last()) else {
        return Err(Error::invalid("time gain needs gate outputs"));
    };
    let step = if frames.len() > 1 {
        frames[frames.len() - 1].0 - frames[frames.len() - 2].0
    } else {
        0.0
    };
    if t_cross < first.0 || t_cross > last.0 + step + 1e-9 {
        return Err(Error::invalid(format!(
            "crossing at {t_cross} s outside covered interval [{}, {}]",
            first.0, last.0
        )));
    }
    let ok = |p: &[f64; CLASSES]| match rule {
        DecisionRule::Argmax => argmax(p) == k,
        DecisionRule::Threshold(th) => p[k] >= th,
    };
    let mut onset = None;
    for (t, p) in frames.iter().rev() {
        if *t > t_cross + 1e-9 {
            continue;
        }
        if *t < t_cross - horizon - 1e-9 || !ok(p) {
            break;
        }
        onset = Some(*t);
    }
    Ok(onset.map_or(0.0, |t| t_cross - t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGainSummary {
    pub mean: f64,
    pub count: usize,
    pub unstable_fraction: f64,
}

/// Average over all events; events without a stable decision count as 0.
pub fn summarize_time_gain(gains: &[f64]) -> Option<TimeGainSummary> {
    if gains.is_empty() {
        return None;
    }
    let n = gains.len() as f64;
    Some(TimeGainSummary {
        mean: gains.iter().sum::<f64>() / n,
        count: gains.len(),
        unstable_fraction: gains.iter().filter(|&&g| g == 0.0).count() as f64 / n,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Box-plot summary with 1.5 IQR whiskers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub min: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile(&v, 0.25)?;
        let q3 = quantile(&v, 0.75)?;
        let iqr = q3 - q1;
        let lo_fence = q1 - 1.5 * iqr;
        let hi_fence = q3 + 1.5 * iqr;
        Some(Self {
            count: v.len(),
            q1,
            median: quantile(&v, 0.5)?,
            q3,
            whisker_low: v.iter().copied().find(|&x| x >= lo_fence).unwrap_or(q1),
            whisker_high: v
                .iter()
                .rev()
                .copied()
                .find(|&x| x <= hi_fence)
                .unwrap_or(q3),
            min: v[0],
            max: v[v.len() - 1],
        })
    }
}

/// Absolute errors per horizon. Missing predictions or truths are
/// skipped and counted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorSamples {
    pub per_horizon: Vec<Vec<f64>>,
    pub skipped: Vec<usize>,
}

pub fn lateral_errors(
    predicted: &[Vec<Option<f64>>],
    truth: &[Vec<Option<f64>>],
    horizons: usize,
) -> Result<ErrorSamples> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    let mut out = ErrorSamples {
        per_horizon: vec![Vec::new(); horizons],
        skipped: vec![0; horizons],
    };
    for (p, t) in predicted.iter().zip(truth) {
        for h in 0..horizons {
            match (p.get(h).copied().flatten(), t.get(h).copied().flatten()) {
                (Some(a), Some(b)) => out.per_horizon[h].push((a - b).abs()),
                _ => out.skipped[h] += 1,
            }
        }
    }
    Ok(out)
}

impl ErrorSamples {
    pub fn summaries(&self) -> Vec<Option<BoxStats>> {
        self.per_horizon.iter().map(|v| BoxStats::of(v)).collect()
    }
}

/// Edges in `width` steps covering `[min, max]` of the values.
pub fn density_bin_edges(values: &[f64], width: f64) -> Result<Vec<f64>> {
    if !(width > 0.0) {
        return Err(Error::invalid(format!(
            "bin width must be positive, got {width}"
        )));
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let (Some(lo), Some(hi)) = (
        finite.iter().copied().reduce(f64::min),
        finite.iter().copied().reduce(f64::max),
    ) else {
        return Ok(Vec::new());
    };
    let start = (lo / width).floor();
    let mut end = (hi / width).ceil();
    if end <= start {
        end = start + 1.0;
    }
    Ok((start as i64..=end as i64)
        .map(|i| i as f64 * width)
        .collect())
}

/// Bin of `v` for half-open bins `[e_i, e_i+1)`, the last one closed.
pub fn bin_index(edges: &[f64], v: f64) -> Option<usize> {
    if edges.len() < 2 || !(v >= edges[0] && v <= edges[edges.len() - 1]) {
        return None;
    }
    let i = edges.partition_point(|&e| e <= v);
    Some((i - 1).min(edges.len() - 2))
}

pub const MIN_CONFIDENT_COUNT: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityBinStat {
    pub maneuver: Maneuver,
    pub low: f64,
    pub high: f64,
    pub count: usize,
    pub median: Option<f64>,
    pub low_confidence: bool,
}

/// Median error per (maneuver class, density bin), empty bins included.
pub fn stratify_by_density(
    records: &[(f64, Maneuver, f64)],
    edges: &[f64],
) -> Result<Vec<DensityBinStat>> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(
            "density bin edges must be increasing with at least two entries",
        ));
    }
    let nb = edges.len() - 1;
    let mut cells: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); nb]; CLASSES];
    let mut outside = 0usize;
    for &(d, m, e) in records {
        let (Some(k), Some(b)) = (m.index(), bin_index(edges, d)) else {
            outside += 1;
            continue;
        };
        cells[k][b].push(e);
    }
    if outside > 0 {
        log::warn!("{outside} error samples fall outside the density bins or lack a class");
    }
    let mut out = Vec::new();
    for (k, row) in cells.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            out.push(DensityBinStat {
                maneuver: Maneuver::DEFINED[k],
                low: edges[b],
                high: edges[b + 1],
                count: v.len(),
                median: median(v),
                low_confidence: v.len() < MIN_CONFIDENT_COUNT,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcBinStat {
    pub low: f64,
    pub high: f64,
    pub count: usize,
    pub duration: Option<BoxStats>,
    pub max_abs_vy: Option<BoxStats>,
}

/// Duration and peak lateral speed statistics per density bin over
/// non-truncated events. Empty when no event falls into the bins.
pub fn lc_stats_vs_density(events: &[LaneChangeEvent], edges: &[f64]) -> Result<Vec<LcBinStat>> {
    if edges.len() < 2 {
        return Ok(Vec::new());
    }
    let nb = edges.len() - 1;
    let mut dur = vec![Vec::new(); nb];
    let mut vy = vec![Vec::new(); nb];
    for e in events {
        let Some(b) = e.boundaries.filter(|b| !b.truncated) else {
            continue;
        };
        if let Some(i) = bin_index(edges, e.traffic_density) {
            dur[i].push(b.duration);
            vy[i].push(b.max_abs_vy);
        }
    }
    if dur.iter().all(Vec::is_empty) {
        return Ok(Vec::new());
    }
    Ok((0..nb)
        .map(|i| LcBinStat {
            low: edges[i],
            high: edges[i + 1],
            count: dur[i].len(),
            duration: BoxStats::of(&dur[i]),
            max_abs_vy: BoxStats::of(&vy[i]),
        })
        .collect())
}

/// Average ranks (1-based), ties sharing the mean rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            r[o] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` for fewer than two points or a
/// constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{LaneChangeBoundaries, LaneChangeDirection, TrackKey};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pairwise(scores: &[f64], pos: &[bool]) -> f64 {
        let mut s = 0.0;
        let mut n = 0.0;
        for (i, &a) in scores.iter().enumerate() {
            for (j, &b) in scores.iter().enumerate() {
                if pos[i] && !pos[j] {
                    n += 1.0;
                    s += if a > b {
                        1.0
                    } else if a == b {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        s / n
    }

    #[test]
    fn separated_scores_have_unit_auc() {
        let c = roc_auc(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(c.auc, 1.0);
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(data in prop::collection::vec((0u8..6, any::<bool>()), 2..60)) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 5.0).collect();
            let pos: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(pos.iter().any(|&p| p) && pos.iter().any(|&p| !p));
            let auc = roc_auc(&scores, &pos).unwrap().auc;
            prop_assert!((auc - pairwise(&scores, &pos)).abs() < 1e-12);
        }

        #[test]
        fn bacc_is_permutation_invariant(
            pairs in prop::collection::vec((0usize..3, 0usize..3), 1..80),
            perm in Just([2usize, 0, 1]),
        ) {
            let p: Vec<Maneuver> = pairs.iter().map(|x| Maneuver::DEFINED[x.0]).collect();
            let t: Vec<Maneuver> = pairs.iter().map(|x| Maneuver::DEFINED[x.1]).collect();
            let pp: Vec<Maneuver> = pairs.iter().map(|x| Maneuver::DEFINED[perm[x.0]]).collect();
            let tp: Vec<Maneuver> = pairs.iter().map(|x| Maneuver::DEFINED[perm[x.1]]).collect();
            let a = bacc(&p, &t).unwrap().value;
            let b = bacc(&pp, &tp).unwrap().value;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn delayed_onset_never_increases_gain(onset in 0usize..100, delay in 0usize..50) {
            let seq = |start: usize| -> Vec<(f64, [f64; 3])> {
                (0..=100).map(|i| {
                    let p = if i >= start { [0.8, 0.1, 0.1] } else { [0.1, 0.8, 0.1] };
                    (i as f64 * 0.04, p)
                }).collect()
            };
            let a = time_gain(&seq(onset), Maneuver::Lcl, 4.0, 5.0, DecisionRule::Argmax).unwrap();
            let b = time_gain(&seq(onset + delay), Maneuver::Lcl, 4.0, 5.0, DecisionRule::Argmax).unwrap();
            prop_assert!(a >= 0.0 && b <= a + 1e-12);
        }
    }

    #[test]
    fn random_scores_give_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scores: Vec<f64> = (0..100_000).map(|_| rng.random()).collect();
        let pos: Vec<bool> = (0..100_000).map(|_| rng.random()).collect();
        assert!((roc_auc(&scores, &pos).unwrap().auc - 0.5).abs() < 0.02);
    }

    #[test]
    fn bacc_examples() {
        use Maneuver::*;
        let t = [Lcl, Flw, Lcr, Lcl, Flw, Lcr];
        assert_eq!(bacc(&t, &t).unwrap().value, 1.0);
        assert!((bacc(&[Flw; 6], &t).unwrap().value - 1.0 / 3.0).abs() < 1e-15);
        let r = bacc_from_confusion(&[[8, 2, 0], [1, 9, 0], [0, 3, 7]]).unwrap();
        assert!((r.value - 0.8).abs() < 1e-12);
        let r = bacc(&[Lcl, Flw], &[Lcl, Lcl]).unwrap();
        assert_eq!(r.excluded, vec![Flw, Lcr]);
    }

    fn gate_seq(correct_from: f64) -> Vec<(f64, [f64; 3])> {
        (0..=100)
            .map(|i| {
                let t = i as f64 * 0.05;
                (
                    t,
                    if t >= correct_from - 1e-9 {
                        [0.1, 0.2, 0.7]
                    } else {
                        [0.2, 0.7, 0.1]
                    },
                )
            })
            .collect()
    }

    #[test]
    fn time_gain_examples() {
        let g = time_gain(
            &gate_seq(2.5),
            Maneuver::Lcr,
            5.0,
            5.0,
            DecisionRule::Argmax,
        )
        .unwrap();
        assert!((g - 2.5).abs() < 1e-9);
        let flicker: Vec<_> = (0..=125)
            .map(|i| {
                (
                    i as f64 * 0.04,
                    if i % 2 == 0 {
                        [0.1, 0.2, 0.7]
                    } else {
                        [0.2, 0.7, 0.1]
                    },
                )
            })
            .collect();
        for t_cross in [4.92, 4.96] {
            let g = time_gain(&flicker, Maneuver::Lcr, t_cross, 5.0, DecisionRule::Argmax).unwrap();
            assert!(g.abs() < 1e-9);
        }
        let g = time_gain(
            &gate_seq(0.0),
            Maneuver::Lcr,
            3.0,
            5.0,
            DecisionRule::Argmax,
        )
        .unwrap();
        assert!((g - 3.0).abs() < 1e-9);
        assert!(time_gain(
            &gate_seq(0.0),
            Maneuver::Lcr,
            9.0,
            5.0,
            DecisionRule::Argmax
        )
        .is_err());
        let g = time_gain(
            &gate_seq(2.5),
            Maneuver::Lcr,
            5.0,
            5.0,
            DecisionRule::Threshold(0.8),
        )
        .unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn quantiles_and_whiskers() {
        let v = [1.0, 2.0, 3.0, 4.0, 100.0];
        let b = BoxStats::of(&v).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        assert_eq!(b.whisker_high, 4.0);
        assert_eq!(b.max, 100.0);
        assert_eq!(quantile(&[0.0, 10.0], 0.3), Some(3.0));
    }

    #[test]
    fn perfect_prediction_has_zero_error() {
        let t = vec![vec![Some(0.1), Some(0.4), None]];
        let e = lateral_errors(&t, &t, 3).unwrap();
        assert!(e.per_horizon[..2].iter().flatten().all(|&x| x == 0.0));
        assert_eq!(e.skipped, vec![0, 0, 1]);
    }

    #[test]
    fn single_bin_equals_global_median() {
        let recs: Vec<(f64, Maneuver, f64)> = (0..50)
            .map(|i| (12.3, Maneuver::Flw, i as f64 * 0.1))
            .collect();
        let stats = stratify_by_density(&recs, &[12.0, 13.0]).unwrap();
        let flw = stats.iter().find(|s| s.maneuver == Maneuver::Flw).unwrap();
        let errs: Vec<f64> = recs.iter().map(|r| r.2).collect();
        assert_eq!(flw.median, median(&errs));
        assert_eq!(stats.iter().map(|s| s.count).sum::<usize>(), 50);
        assert!(stats
            .iter()
            .filter(|s| s.maneuver != Maneuver::Flw)
            .all(|s| s.count == 0 && s.low_confidence));
    }

    #[test]
    fn edges_cover_range() {
        let e = density_bin_edges(&[3.2, 7.9, 5.0], 1.0).unwrap();
        assert_eq!(e.first(), Some(&3.0));
        assert_eq!(e.last(), Some(&8.0));
        assert_eq!(bin_index(&e, 8.0), Some(4));
        assert_eq!(bin_index(&e, 3.0), Some(0));
        assert_eq!(bin_index(&e, 8.1), None);
    }

    fn lc(density: f64, duration: f64, truncated: bool) -> LaneChangeEvent {
        LaneChangeEvent {
            track: TrackKey {
                recording: 1,
                vehicle: 1,
            },
            direction: LaneChangeDirection::Left,
            t_cross: 0.0,
            frame_index: 0,
            from_lane: 1,
            to_lane: 2,
            boundaries: Some(LaneChangeBoundaries {
                t_begin: 0.0,
                t_end: duration,
                duration,
                max_abs_vy: duration / 10.0,
                truncated,
            }),
            traffic_density: density,
        }
    }

    #[test]
    fn lc_stats_follow_duration_law() {
        let events: Vec<_> = (0..200)
            .map(|i| {
                let d = 5.0 + (i % 35) as f64;
                lc(d, 4.0 + 0.1 * d, i % 17 == 0)
            })
            .collect();
        let edges: Vec<f64> = (1..=8).map(|i| i as f64 * 5.0).collect();
        let stats = lc_stats_vs_density(&events, &edges).unwrap();
        let med: Vec<f64> = stats.iter().map(|s| s.duration.unwrap().median).collect();
        let idx: Vec<f64> = (0..med.len()).map(|i| i as f64).collect();
        assert!(spearman(&idx, &med).unwrap() > 0.9);
        let truncated = events
            .iter()
            .filter(|e| e.boundaries.unwrap().truncated)
            .count();
        assert_eq!(
            stats.iter().map(|s| s.count).sum::<usize>(),
            200 - truncated
        );
        assert!(lc_stats_vs_density(&events, &[100.0, 101.0])
            .unwrap()
            .is_empty());
    }

    #[test]
    fn spearman_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }
}
