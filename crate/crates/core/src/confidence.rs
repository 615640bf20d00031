//! Multi-pass Bayesian confidence and the auxiliary/priority target registry.

use serde::{Deserialize, Serialize};

use crate::detect::{Detection, DetectorProfile};
use crate::error::{Error, Result};
use crate::orbit::wrap_180;
use crate::time::Epoch;

/// One recursive Bayesian update of the probability that a fire is present.
///
/// `likelihood` is the detector's confidence for the current interpretation and `false_rate`
/// the probability of such a detection when no fire is present.
pub fn bayes_update(prior: f64, likelihood: f64, false_rate: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&prior) {
        return Err(Error::invalid(format!("prior {prior} outside [0, 1]")));
    }
    if !(likelihood > 0.0 && likelihood <= 1.0) {
        return Err(Error::invalid(format!(
            "likelihood {likelihood} outside (0, 1]"
        )));
    }
    if !(false_rate > 0.0 && false_rate < 1.0) {
        return Err(Error::invalid(format!(
            "false rate {false_rate} outside (0, 1)"
        )));
    }
    let hit = likelihood * prior;
    let denom = hit + false_rate * (1.0 - prior);
    if denom == 0.0 {
        return Err(Error::invalid("Bayes update has a zero evidence term"));
    }
    Ok(hit / denom)
}

/// Likelihood that stands in for a revisit that found nothing. With the profile's fixed false
/// rate it scales the posterior odds by `(1 - map) / map`, the odds ratio of a missed detection.
pub fn miss_likelihood(profile: &DetectorProfile) -> f64 {
    let f = profile.false_rate();
    f * f / profile.map_value
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    pub time: Epoch,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedTarget {
    pub id: u64,
    /// Confidence-weighted running centroid, deg.
    pub lat: f64,
    pub lon: f64,
    pub confidence: f64,
    pub n_interpretations: u32,
    pub promoted: bool,
    pub history: Vec<Interpretation>,
    /// Sum of the raw confidences behind the centroid.
    pub weight: f64,
}

impl TrackedTarget {
    /// Chebyshev distance in degrees, longitude wrapped.
    pub fn distance_to(&self, lat: f64, lon: f64) -> f64 {
        (self.lat - lat).abs().max(wrap_180(self.lon - lon).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistryParams {
    pub promotion_threshold: f64,
    /// deg
    pub cluster_radius: f64,
    pub top_k: usize,
}

impl Default for RegistryParams {
    fn default() -> Self {
        RegistryParams {
            promotion_threshold: 0.95,
            cluster_radius: 0.5,
            top_k: 50,
        }
    }
}

/// What a single registration did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Registration {
    pub target_id: u64,
    pub created: bool,
    /// Set when this registration pushed the target into the priority set.
    pub promoted: bool,
}

/// Store of every potential fire seen so far. `auxiliary` keeps insertion order; `priority`
/// lists promoted target ids in promotion order and only ever grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRegistry {
    pub params: RegistryParams,
    pub auxiliary: Vec<TrackedTarget>,
    pub priority: Vec<u64>,
    next_id: u64,
}

impl Default for TargetRegistry {
    fn default() -> Self {
        Self::new(RegistryParams::default())
    }
}

impl TargetRegistry {
    pub fn new(params: RegistryParams) -> Self {
        TargetRegistry {
            params,
            auxiliary: Vec::new(),
            priority: Vec::new(),
            next_id: 0,
        }
    }

    pub fn get(&self, id: u64) -> Option<&TrackedTarget> {
        self.auxiliary.iter().find(|t| t.id == id)
    }

    pub fn priority_targets(&self) -> impl Iterator<Item = &TrackedTarget> + '_ {
        self.priority.iter().filter_map(|id| self.get(*id))
    }

    /// Folds a detection into the registry: updates the nearest target within the cluster
    /// radius, or starts a new one seeded with the detection's confidence.
    pub fn register_detection(
        &mut self,
        det: &Detection,
        profile: &DetectorProfile,
    ) -> Result<Registration> {
        let radius = self.params.cluster_radius;
        let nearest = self
            .auxiliary
            .iter()
            .enumerate()
            .map(|(i, t)| (i, t.distance_to(det.lat, det.lon)))
            .filter(|&(_, d)| d <= radius)
            .min_by(|a, b| a.1.total_cmp(&b.1));

        let (idx, created) = match nearest {
            Some((i, _)) => {
                self.update_target(
                    i,
                    det.lat,
                    det.lon,
                    det.box_.confidence,
                    det.time,
                    profile.false_rate(),
                )?;
                (i, false)
            }
            None => {
                let id = self.next_id;
                self.next_id += 1;
                self.auxiliary.push(TrackedTarget {
                    id,
                    lat: det.lat,
                    lon: det.lon,
                    confidence: det.box_.confidence,
                    n_interpretations: 1,
                    promoted: false,
                    history: vec![Interpretation {
                        time: det.time,
                        confidence: det.box_.confidence,
                    }],
                    weight: det.box_.confidence,
                });
                (self.auxiliary.len() - 1, true)
            }
        };
        let promoted = self.promote(idx);
        Ok(Registration {
            target_id: self.auxiliary[idx].id,
            created,
            promoted,
        })
    }

    /// Applies a further interpretation of a known target without a new detection record,
    /// e.g. a revisit whose evidence comes from elsewhere.
    pub fn reinterpret(
        &mut self,
        id: u64,
        likelihood: f64,
        time: Epoch,
        profile: &DetectorProfile,
    ) -> Result<Registration> {
        let idx = self
            .auxiliary
            .iter()
            .position(|t| t.id == id)
            .ok_or_else(|| Error::invalid(format!("unknown target {id}")))?;
        let (lat, lon) = (self.auxiliary[idx].lat, self.auxiliary[idx].lon);
        self.update_target(idx, lat, lon, likelihood, time, profile.false_rate())?;
        let promoted = self.promote(idx);
        Ok(Registration {
            target_id: id,
            created: false,
            promoted,
        })
    }

    /// Revisit of a known target that produced no detection.
    pub fn record_miss(
        &mut self,
        id: u64,
        time: Epoch,
        profile: &DetectorProfile,
    ) -> Result<Registration> {
        self.reinterpret(id, miss_likelihood(profile), time, profile)
    }

    fn update_target(
        &mut self,
        idx: usize,
        lat: f64,
        lon: f64,
        likelihood: f64,
        time: Epoch,
        false_rate: f64,
    ) -> Result<()> {
        let t = &mut self.auxiliary[idx];
        t.confidence = bayes_update(t.confidence, likelihood, false_rate)?;
        t.n_interpretations += 1;
        let w = t.weight + likelihood;
        if w > 0.0 {
            let dlon = wrap_180(lon - t.lon);
            t.lat = (t.lat * t.weight + lat * likelihood) / w;
            t.lon = wrap_180(t.lon + dlon * likelihood / w);
        }
        t.weight = w;
        t.history.push(Interpretation {
            time,
            confidence: likelihood,
        });
        Ok(())
    }

    fn promote(&mut self, idx: usize) -> bool {
        let t = &mut self.auxiliary[idx];
        if !t.promoted && t.confidence > self.params.promotion_threshold {
            t.promoted = true;
            self.priority.push(t.id);
            true
        } else {
            false
        }
    }

    /// Up to `top_k` unpromoted targets by confidence (ties in insertion order) with their
    /// objective weight, the squared confidence.
    pub fn select_auxiliary(&self) -> Vec<(TrackedTarget, f64)> {
        let mut candidates: Vec<&TrackedTarget> =
            self.auxiliary.iter().filter(|t| !t.promoted).collect();
        candidates.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        candidates
            .into_iter()
            .take(self.params.top_k)
            .map(|t| (t.clone(), t.confidence * t.confidence))
            .collect()
    }
}
