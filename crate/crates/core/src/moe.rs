//! Mixture-of-experts prediction: the gate weights each expert's
//! conditional (y, t) mixture.

use serde::{Deserialize, Serialize};

use crate::data_model::Maneuver;
use crate::error::{Error, Result};
use crate::experts::ManeuverExpert;
use crate::features::FeatureKind;
use crate::gmm::GaussianMixture;
use crate::mlp::{ManeuverClassifier, CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionComponent {
    pub weight: f64,
    /// (y, t)
    pub mean: [f64; 2],
    /// Row-major 2x2.
    pub covariance: [f64; 4],
    pub maneuver: Maneuver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePrediction {
    pub components: Vec<PredictionComponent>,
    /// (LCL, FLW, LCR)
    pub gate: [f64; CLASSES],
}

impl MixturePrediction {
    /// Combines expert conditionals under `gate`. Experts with zero gate
    /// probability contribute nothing.
    pub fn combine(
        gate: [f64; CLASSES],
        experts: &[ManeuverExpert; CLASSES],
        v_y: f64,
        d_y_cl: f64,
    ) -> Result<Self> {
        let total: f64 = gate.iter().sum();
        if gate.iter().any(|g| !(*g >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "gate {gate:?} is not a distribution"
            )));
        }
        let mut components = Vec::new();
        for (g, expert) in gate.iter().zip(experts) {
            if *g == 0.0 {
                continue;
            }
            let cond = expert.condition(v_y, d_y_cl)?;
            for ((w, m), c) in cond.weights.iter().zip(&cond.means).zip(&cond.covariances) {
                components.push(PredictionComponent {
                    weight: g * w,
                    mean: [m[0], m[1]],
                    covariance: [c[0], c[1], c[2], c[3]],
                    maneuver: expert.maneuver,
                });
            }
        }
        let s: f64 = components.iter().map(|c| c.weight).sum();
        components.iter_mut().for_each(|c| c.weight /= s);
        Ok(Self { components, gate })
    }

    pub fn mixture(&self) -> Result<GaussianMixture> {
        GaussianMixture::new(
            self.components.iter().map(|c| c.weight).collect(),
            self.components.iter().map(|c| c.mean.to_vec()).collect(),
            self.components
                .iter()
                .map(|c| c.covariance.to_vec())
                .collect(),
        )
    }
}

fn lateral_inputs(classifier: &ManeuverClassifier, features: &[f64]) -> Result<(f64, f64)> {
    let schema = &classifier.schema;
    if features.len() != schema.len() {
        return Err(Error::SchemaMismatch(format!(
            "expected {} features, got {}",
            schema.len(),
            features.len()
        )));
    }
    let idx = |k: FeatureKind| {
        schema
            .index_of(k)
            .ok_or_else(|| Error::SchemaMismatch(format!("schema lacks `{}`", k.name())))
    };
    Ok((
        features[idx(FeatureKind::LateralVelocity)?],
        features[idx(FeatureKind::LaneOffset)?],
    ))
}

/// Gate-weighted mixture of the three expert conditionals for raw features.
pub fn predict_distribution(
    features: &[f64],
    classifier: &ManeuverClassifier,
    experts: &[ManeuverExpert; CLASSES],
) -> Result<MixturePrediction> {
    let (v_y, d_y_cl) = lateral_inputs(classifier, features)?;
    let gate = classifier.predict(features)?;
    MixturePrediction::combine(gate, experts, v_y, d_y_cl)
}

pub fn one_hot(label: Maneuver) -> Result<[f64; CLASSES]> {
    let i = label
        .index()
        .ok_or_else(|| Error::invalid("an undefined label cannot select an expert"))?;
    let mut g = [0.0; CLASSES];
    g[i] = 1.0;
    Ok(g)
}

/// Same as [`predict_distribution`] with the gate replaced by the true label.
pub fn predict_with_labels(
    features: &[f64],
    label: Maneuver,
    classifier: &ManeuverClassifier,
    experts: &[ManeuverExpert; CLASSES],
) -> Result<MixturePrediction> {
    let gate = one_hot(label)?;
    let (v_y, d_y_cl) = lateral_inputs(classifier, features)?;
    MixturePrediction::combine(gate, experts, v_y, d_y_cl)
}

/// Center of gravity of y at time `t` within `(0, horizon]`.
pub fn point_estimate(prediction: &MixturePrediction, t: f64, horizon: f64) -> Result<f64> {
    if !(t > 0.0 && t <= horizon + 1e-9) {
        return Err(Error::invalid(format!(
            "prediction time {t} outside (0, {horizon}]"
        )));
    }
    Ok(prediction.mixture()?.condition(&[1], &[t])?.mean()[0])
}

/// [`point_estimate`] at several times, conditioning one shared mixture.
pub fn point_estimates(
    prediction: &MixturePrediction,
    times: &[f64],
    horizon: f64,
) -> Result<Vec<f64>> {
    let mixture = prediction.mixture()?;
    times
        .iter()
        .map(|&t| {
            if !(t > 0.0 && t <= horizon + 1e-9) {
                return Err(Error::invalid(format!(
                    "prediction time {t} outside (0, {horizon}]"
                )));
            }
            Ok(mixture.condition(&[1], &[t])?.mean()[0])
        })
        .collect()
}

/// Constant lateral velocity extrapolation.
pub fn cv_baseline(y: f64, v_y: f64, t: f64) -> f64 {
    y + v_y * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::GaussianMixture;

    fn expert(m: Maneuver, slope: f64) -> ManeuverExpert {
        // y = slope * t + v_y with unit variances elsewhere
        let cov = vec![
            0.04,
            0.0,
            0.04,
            0.0, //
            0.0,
            0.25,
            0.0,
            0.0, //
            0.04,
            0.0,
            0.04 + slope * slope * 2.0 + 0.01,
            slope * 2.0, //
            0.0,
            0.0,
            slope * 2.0,
            2.0,
        ];
        ManeuverExpert {
            maneuver: m,
            dims: vec![],
            mixture: GaussianMixture::single(vec![0.0, 0.0, slope * 2.5, 2.5], cov).unwrap(),
            log_likelihood: 0.0,
            selection: vec![],
            points_used: 0,
        }
    }

    fn experts() -> [ManeuverExpert; 3] {
        [
            expert(Maneuver::Lcl, 0.6),
            expert(Maneuver::Flw, 0.0),
            expert(Maneuver::Lcr, -0.6),
        ]
    }

    #[test]
    fn one_hot_gate_reproduces_expert() {
        let ex = experts();
        let p = MixturePrediction::combine([1.0, 0.0, 0.0], &ex, 0.1, 0.2).unwrap();
        let c = ex[0].condition(0.1, 0.2).unwrap();
        assert_eq!(p.components.len(), c.len());
        for (a, (w, m)) in p.components.iter().zip(c.weights.iter().zip(&c.means)) {
            assert!((a.weight - w).abs() < 1e-12);
            assert!((a.mean[0] - m[0]).abs() < 1e-12 && (a.mean[1] - m[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_gate_averages_expert_means() {
        let ex = experts();
        let p = MixturePrediction::combine([1.0 / 3.0; 3], &ex, 0.05, -0.1).unwrap();
        let t = 3.0;
        let avg: f64 = ex
            .iter()
            .map(|e| {
                e.condition(0.05, -0.1)
                    .unwrap()
                    .condition(&[1], &[t])
                    .unwrap()
                    .mean()[0]
            })
            .sum::<f64>()
            / 3.0;
        // each expert's t-marginal is identical, so reweighting by t is uniform
        assert!((point_estimate(&p, t, 5.0).unwrap() - avg).abs() < 1e-12);
        let s: f64 = p.components.iter().map(|c| c.weight).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    fn pred(components: Vec<([f64; 2], f64)>) -> MixturePrediction {
        MixturePrediction {
            components: components
                .into_iter()
                .map(|(mean, weight)| PredictionComponent {
                    weight,
                    mean,
                    covariance: [0.3, 0.0, 0.0, 1.0],
                    maneuver: Maneuver::Flw,
                })
                .collect(),
            gate: [0.0, 1.0, 0.0],
        }
    }

    #[test]
    fn point_estimate_examples() {
        let p = pred(vec![([0.0, 2.5], 1.0)]);
        for t in [0.2, 1.0, 5.0] {
            assert!(point_estimate(&p, t, 5.0).unwrap().abs() < 1e-12);
        }
        let p = pred(vec![([-1.0, 2.5], 0.5), ([3.0, 2.5], 0.5)]);
        assert!((point_estimate(&p, 4.0, 5.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(point_estimate(&p, 0.0, 5.0).is_err());
        assert!(point_estimate(&p, 5.5, 5.0).is_err());
    }

    #[test]
    fn batched_estimates_match_single() {
        let p = pred(vec![([-1.0, 2.0], 0.3), ([2.0, 4.0], 0.7)]);
        let times = [0.2, 2.6, 5.0];
        let many = point_estimates(&p, &times, 5.0).unwrap();
        for (t, m) in times.iter().zip(many) {
            assert_eq!(point_estimate(&p, *t, 5.0).unwrap(), m);
        }
        assert!(point_estimates(&p, &[6.0], 5.0).is_err());
    }

    #[test]
    fn cv_examples() {
        assert_eq!(cv_baseline(0.7, 0.0, 3.0), 0.7);
        assert!((cv_baseline(0.0, 0.2, 5.0) - 1.0).abs() < 1e-15);
        assert_eq!(cv_baseline(0.0, -0.2, 5.0), -cv_baseline(0.0, 0.2, 5.0));
    }

    #[test]
    fn labels_reject_undefined() {
        assert!(one_hot(Maneuver::Ndef).is_err());
        assert_eq!(one_hot(Maneuver::Flw).unwrap(), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn weighted_mixture_can_beat_every_expert() {
        // bimodal truth: half the cases end at -1, half at +1
        let lo = pred(vec![([-1.0, 2.5], 1.0)]);
        let hi = pred(vec![([1.0, 2.5], 1.0)]);
        let mix = pred(vec![([-1.0, 2.5], 0.5), ([1.0, 2.5], 0.5)]);
        let truths = [-0.2, 0.1, 0.3, -0.4];
        let err = |p: &MixturePrediction| -> f64 {
            let y = point_estimate(p, 5.0, 5.0).unwrap();
            truths.iter().map(|t| (y - t).abs()).sum()
        };
        assert!(err(&mix) < err(&lo));
        assert!(err(&mix) < err(&hi));
    }
}
