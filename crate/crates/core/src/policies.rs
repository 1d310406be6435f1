//! Decision policies for the reduced accept/assign decision.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dqn::{greedy_decide, QNetwork};
use crate::error::{Error, Result};
use crate::instance::Geography;
use crate::intraday::{extract_features, Decision, DecisionPoint, FeatureScaler};

/// Floor on regional demand in reward-weight denominators.
pub const DEMAND_FLOOR: f64 = 1e-6;

pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    fn requires_training(&self) -> bool {
        false
    }

    /// Must return a member of `point.feasible()`.
    fn decide(&self, point: &DecisionPoint<'_>, geo: &Geography) -> Decision;
}

/// Accept via the feasible vehicle with the smallest insertion delta
/// (lowest id on ties); reject if none is feasible.
pub fn myopic_decide(point: &DecisionPoint<'_>) -> Decision {
    let mut best: Option<(usize, f64)> = None;
    for (v, r) in point.insertions.iter().enumerate() {
        if r.feasible && best.is_none_or(|(_, d)| r.delta_time < d) {
            best = Some((v, r.delta_time));
        }
    }
    best.map_or(Decision::REJECT, |(v, _)| Decision::vehicle(v))
}

/// Daily per-region acceptance cap: mean expected demand over regions.
pub fn bucket_cap(expected_demands: &[f64]) -> f64 {
    expected_demands.iter().sum::<f64>() / expected_demands.len() as f64
}

/// Myopic, except requests that would push their region past its cap today
/// are rejected. A fractional cap admits its floor.
pub fn bucket_decide(point: &DecisionPoint<'_>, expected_demands: &[f64]) -> Decision {
    let region = point.region();
    let accepted = point.state.region_accepted_today[region] as f64;
    if accepted + 1.0 > bucket_cap(expected_demands) {
        Decision::REJECT
    } else {
        myopic_decide(point)
    }
}

/// Largest regional demand over the region's demand.
pub fn rrl_reward(region: usize, initial_demands: &[f64]) -> Result<f64> {
    let own = *initial_demands
        .get(region)
        .ok_or_else(|| Error::config(format!("rrl: region {region} out of range")))?;
    if !(own > 0.0) {
        return Err(Error::config(format!(
            "rrl: region {region} has zero initial demand"
        )));
    }
    let max = initial_demands.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(max / own)
}

/// Reward weights for every region (see [`rrl_reward`]).
pub fn rrl_rewards(initial_demands: &[f64]) -> Result<Vec<f64>> {
    (0..initial_demands.len())
        .map(|i| rrl_reward(i, initial_demands))
        .collect()
}

/// Manipulated-reward scores: acceptance Q-values are raised by `w - 1`,
/// where `w = max(D) / D[region]` with demands floored at [`DEMAND_FLOOR`].
pub fn mrl_scores(q: &[f64], region: usize, current_demands: &[f64]) -> Vec<f64> {
    let max = current_demands.iter().copied().fold(DEMAND_FLOOR, f64::max);
    let w = max / current_demands[region].max(DEMAND_FLOOR);
    q.iter()
        .enumerate()
        .map(|(d, &v)| if d == 0 { v } else { v + (w - 1.0) })
        .collect()
}

pub fn mrl_decide(point: &DecisionPoint<'_>, q: &[f64], current_demands: &[f64]) -> Decision {
    let scores = mrl_scores(q, point.region(), current_demands);
    greedy_decide(&scores, &point.feasibility_mask())
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MyopicPolicy;

impl Policy for MyopicPolicy {
    fn name(&self) -> &str {
        "myopic"
    }

    fn decide(&self, point: &DecisionPoint<'_>, _geo: &Geography) -> Decision {
        myopic_decide(point)
    }
}

/// Caps use the expected demands in the state, which the horizon loop
/// refreshes at every demand update.
#[derive(Clone, Copy, Debug, Default)]
pub struct BucketPolicy;

impl Policy for BucketPolicy {
    fn name(&self) -> &str {
        "bucket"
    }

    fn decide(&self, point: &DecisionPoint<'_>, _geo: &Geography) -> Decision {
        bucket_decide(point, point.state.region_expected)
    }
}

/// Greedy play of a trained Q-network (intra-day, RRL, IRL-E, IRL-P).
#[derive(Clone, Debug)]
pub struct QPolicy {
    pub kind: PolicyKind,
    pub network: Arc<QNetwork>,
    pub scaler: FeatureScaler,
}

impl Policy for QPolicy {
    fn name(&self) -> &str {
        self.kind.as_str()
    }

    fn requires_training(&self) -> bool {
        true
    }

    fn decide(&self, point: &DecisionPoint<'_>, geo: &Geography) -> Decision {
        let f = extract_features(point, geo, &self.scaler);
        let q = self.network.q_values(&f.0);
        greedy_decide(&q, &point.feasibility_mask())
    }
}

/// Intra-day network with deployment-time reward manipulation.
#[derive(Clone, Debug)]
pub struct MrlPolicy {
    pub network: Arc<QNetwork>,
    pub scaler: FeatureScaler,
}

impl Policy for MrlPolicy {
    fn name(&self) -> &str {
        "mrl"
    }

    fn requires_training(&self) -> bool {
        true
    }

    fn decide(&self, point: &DecisionPoint<'_>, geo: &Geography) -> Decision {
        let f = extract_features(point, geo, &self.scaler);
        let q = self.network.q_values(&f.0);
        mrl_decide(point, &q, point.state.region_expected)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    Myopic,
    Bucket,
    Intraday,
    Rrl,
    Mrl,
    IrlE,
    IrlP,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Myopic,
        PolicyKind::Bucket,
        PolicyKind::Intraday,
        PolicyKind::Rrl,
        PolicyKind::Mrl,
        PolicyKind::IrlE,
        PolicyKind::IrlP,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Myopic => "myopic",
            PolicyKind::Bucket => "bucket",
            PolicyKind::Intraday => "intraday",
            PolicyKind::Rrl => "rrl",
            PolicyKind::Mrl => "mrl",
            PolicyKind::IrlE => "irl-e",
            PolicyKind::IrlP => "irl-p",
        }
    }

    pub fn requires_training(self) -> bool {
        !matches!(self, PolicyKind::Myopic | PolicyKind::Bucket)
    }

    /// Policy whose network this one is played with (MRL reuses intra-day).
    pub fn network_kind(self) -> Option<PolicyKind> {
        match self {
            PolicyKind::Myopic | PolicyKind::Bucket => None,
            PolicyKind::Mrl => Some(PolicyKind::Intraday),
            other => Some(other),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::config(format!(
                    "policy: unknown name `{s}` (expected one of myopic, bucket, intraday, rrl, mrl, irl-e, irl-p)"
                ))
            })
    }
}

/// Builds the playable policy; learned kinds need their network.
pub fn build_policy(
    kind: PolicyKind,
    network: Option<Arc<QNetwork>>,
    scaler: FeatureScaler,
) -> Result<Box<dyn Policy>> {
    Ok(match kind {
        PolicyKind::Myopic => Box::new(MyopicPolicy),
        PolicyKind::Bucket => Box::new(BucketPolicy),
        learned => {
            let network = network.ok_or_else(|| {
                Error::Contract(format!("policy `{learned}` needs a trained network"))
            })?;
            if network.input_len() != scaler.len() || network.num_vehicles != scaler.num_vehicles {
                return Err(Error::config(format!(
                    "weights for `{learned}` expect {} features / {} vehicles, setting has {} / {}",
                    network.input_len(),
                    network.num_vehicles,
                    scaler.len(),
                    scaler.num_vehicles
                )));
            }
            if learned == PolicyKind::Mrl {
                Box::new(MrlPolicy { network, scaler })
            } else {
                Box::new(QPolicy {
                    kind: learned,
                    network,
                    scaler,
                })
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Customer, Point};
    use crate::intraday::IntraDayState;
    use crate::routing::{InsertionPosition, InsertionResult, VehiclePlan};

    fn ins(delta: Option<f64>) -> InsertionResult {
        match delta {
            Some(d) => InsertionResult {
                feasible: true,
                delta_time: d,
                position: Some(InsertionPosition::NewTrip),
            },
            None => InsertionResult::INFEASIBLE,
        }
    }

    fn with_point<T>(
        insertions: &[InsertionResult],
        region: usize,
        accepted: &[u64],
        expected: &[f64],
        f: impl FnOnce(&DecisionPoint<'_>) -> T,
    ) -> T {
        let c = Customer {
            id: 0,
            region_id: region,
            location: Point::new(1.0, 1.0),
            request_time: 10.0,
            deadline: 250.0,
        };
        let plans: Vec<VehiclePlan> = (0..insertions.len()).map(VehiclePlan::new).collect();
        let requested: Vec<u64> = accepted.to_vec();
        let point = DecisionPoint {
            state: IntraDayState {
                now: 10.0,
                pending_customer: &c,
                plans: &plans,
                region_expected: expected,
                region_requested_today: &requested,
                region_accepted_today: accepted,
            },
            insertions,
        };
        f(&point)
    }

    #[test]
    fn myopic_cases() {
        let none = [ins(None), ins(None)];
        assert_eq!(with_point(&none, 0, &[0, 0], &[1.0, 1.0], myopic_decide), Decision::REJECT);
        let one = [ins(None), ins(Some(4.0))];
        assert_eq!(with_point(&one, 0, &[0, 0], &[1.0, 1.0], myopic_decide), Decision(2));
        let tie = [ins(Some(7.2)), ins(Some(3.1)), ins(Some(3.1))];
        assert_eq!(with_point(&tie, 0, &[0, 0], &[1.0, 1.0], myopic_decide), Decision(2));
    }

    #[test]
    fn bucket_cap_binds() {
        assert_eq!(bucket_cap(&[200.0, 50.0]), 125.0);
        let one = [ins(Some(1.0))];
        let d = with_point(&one, 0, &[125, 0], &[200.0, 50.0], |p| bucket_decide(p, &[200.0, 50.0]));
        assert_eq!(d, Decision::REJECT);
        let d = with_point(&one, 0, &[124, 0], &[200.0, 50.0], |p| bucket_decide(p, &[200.0, 50.0]));
        assert_eq!(d, Decision(1));
    }

    #[test]
    fn rrl_reward_values() {
        assert_eq!(rrl_rewards(&[200.0, 50.0]).unwrap(), vec![1.0, 4.0]);
        assert_eq!(rrl_rewards(&[125.0, 125.0]).unwrap(), vec![1.0, 1.0]);
        let c = rrl_rewards(&[50.0, 100.0, 25.0, 75.0]).unwrap();
        assert_eq!(&c[..3], &[2.0, 1.0, 4.0]);
        assert!((c[3] - 4.0 / 3.0).abs() < 1e-15);
        assert!(matches!(rrl_reward(0, &[0.0, 5.0]), Err(Error::Config(_))));
    }

    #[test]
    fn mrl_equal_demands_is_plain_argmax() {
        let q = [0.5, 0.2, 0.4];
        assert_eq!(mrl_scores(&q, 1, &[3.0, 3.0]), q.to_vec());
    }

    #[test]
    fn mrl_vanishing_demand_prefers_acceptance() {
        let q = [100.0, -50.0];
        let scores = mrl_scores(&q, 1, &[10.0, 0.0]);
        assert!(scores[1] > scores[0]);
    }

    #[test]
    fn policy_names_roundtrip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.as_str().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
    }
}
