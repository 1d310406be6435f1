//! Multi-month demand evolution.
//!
//! Days are grouped into blocks of `update_interval` days. Within a block the
//! expected demands are fixed; at the end of each block the realized service
//! level per region drives the update of every region's expected demand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{sample_day, Geography, ServiceParams};
use crate::intraday::{run_day, service_level};
use crate::policies::Policy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DemandModel {
    /// `D' = (1 - alpha) D + alpha * cap * r`.
    Capacitated { alpha: f64, caps: Vec<f64> },
    /// `D' = D (1 + r - threshold)`.
    Uncapacitated { threshold: f64 },
}

impl DemandModel {
    pub fn validate(&self, num_regions: usize) -> Result<()> {
        match self {
            DemandModel::Capacitated { alpha, caps } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::config("demand.alpha must lie in (0, 1)"));
                }
                if caps.len() != num_regions || caps.iter().any(|&c| !(c > 0.0)) {
                    return Err(Error::config("demand.caps: one positive cap per region"));
                }
            }
            DemandModel::Uncapacitated { threshold } => {
                if !(*threshold > 0.0 && *threshold < 1.0) {
                    return Err(Error::config("demand.threshold must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }

    /// Short label used in setting identifiers, e.g. `cap-0.5` or `uncap-0.8`.
    pub fn label(&self) -> String {
        match self {
            DemandModel::Capacitated { alpha, .. } => format!("cap-{alpha}"),
            DemandModel::Uncapacitated { threshold } => format!("uncap-{threshold}"),
        }
    }
}

/// Next block's expected demands; results are clamped at 0.
pub fn update_demand(model: &DemandModel, d_prev: &[f64], service_levels: &[f64]) -> Vec<f64> {
    d_prev
        .iter()
        .zip(service_levels)
        .enumerate()
        .map(|(i, (&d, &r))| {
            let next = match model {
                DemandModel::Capacitated { alpha, caps } => (1.0 - alpha) * d + alpha * caps[i] * r,
                DemandModel::Uncapacitated { threshold } => d * (1.0 + r - threshold),
            };
            next.max(0.0)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonConfig {
    pub days: usize,
    pub update_interval: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig {
            days: 720,
            update_interval: 30,
        }
    }
}

impl HorizonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.days == 0 || self.update_interval == 0 {
            return Err(Error::config("horizon: days and update_interval must be > 0"));
        }
        if self.days % self.update_interval != 0 {
            return Err(Error::config(format!(
                "horizon: update_interval {} does not divide days {}",
                self.update_interval, self.days
            )));
        }
        Ok(())
    }

    pub fn num_updates(&self) -> usize {
        self.days / self.update_interval
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayCounts {
    pub requested: Vec<u64>,
    pub accepted: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonResult {
    pub daily: Vec<DayCounts>,
    /// Expected demands per block plus the final post-update values
    /// (`num_updates + 1` entries).
    pub trajectory: Vec<Vec<f64>>,
    /// Realized service level per block.
    pub service_levels: Vec<Vec<f64>>,
    pub total_services: u64,
    pub avg_daily_services: f64,
    pub end_demand: Vec<f64>,
}

impl HorizonResult {
    /// Requested and accepted totals for block `n`.
    pub fn block_counts(&self, n: usize, update_interval: usize) -> DayCounts {
        let regions = self.trajectory[0].len();
        let mut out = DayCounts {
            requested: vec![0; regions],
            accepted: vec![0; regions],
        };
        for day in &self.daily[n * update_interval..(n + 1) * update_interval] {
            for i in 0..regions {
                out.requested[i] += day.requested[i];
                out.accepted[i] += day.accepted[i];
            }
        }
        out
    }
}

/// Runs the horizon with `policy_for_block(n)` playing block `n`.
pub fn run_horizon_with<'p, F>(
    geo: &Geography,
    params: &ServiceParams,
    model: &DemandModel,
    horizon: &HorizonConfig,
    mut policy_for_block: F,
    seed: u64,
) -> Result<HorizonResult>
where
    F: FnMut(usize) -> &'p dyn Policy,
{
    horizon.validate()?;
    model.validate(geo.num_regions())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regions = geo.num_regions();
    let mut demand = geo.initial_demands();
    let mut trajectory = vec![demand.clone()];
    let mut service_levels = Vec::with_capacity(horizon.num_updates());
    let mut daily = Vec::with_capacity(horizon.days);
    let mut total = 0u64;

    for block in 0..horizon.num_updates() {
        let policy = policy_for_block(block);
        let mut requested = vec![0u64; regions];
        let mut accepted = vec![0u64; regions];
        for _ in 0..horizon.update_interval {
            let scenario = sample_day(geo, params, &demand, &mut rng);
            let day = run_day(geo, params, &scenario, policy, &demand)?;
            for i in 0..regions {
                requested[i] += day.requested[i];
                accepted[i] += day.accepted[i];
            }
            total += day.total_services;
            daily.push(DayCounts {
                requested: day.requested,
                accepted: day.accepted,
            });
        }
        let levels = service_level(&requested, &accepted);
        demand = update_demand(model, &demand, &levels);
        trajectory.push(demand.clone());
        service_levels.push(levels);
    }

    Ok(HorizonResult {
        daily,
        trajectory,
        service_levels,
        total_services: total,
        avg_daily_services: total as f64 / horizon.days as f64,
        end_demand: demand,
    })
}

/// Runs the horizon with one fixed policy.
pub fn run_horizon(
    geo: &Geography,
    params: &ServiceParams,
    model: &DemandModel,
    horizon: &HorizonConfig,
    policy: &dyn Policy,
    seed: u64,
) -> Result<HorizonResult> {
    run_horizon_with(geo, params, model, horizon, |_| policy, seed)
}

/// Mean and standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Estimate {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_err = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Estimate { mean, std_err }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub replications: usize,
    pub avg_daily_services: Estimate,
    /// End-of-horizon expected demand summed over regions.
    pub end_demand: Estimate,
    pub end_demand_per_region: Vec<Estimate>,
}

pub fn summarize(results: &[HorizonResult]) -> Result<HorizonMetrics> {
    if results.is_empty() {
        return Err(Error::config("summarize: no results"));
    }
    let services: Vec<f64> = results.iter().map(|r| r.avg_daily_services).collect();
    let end: Vec<f64> = results.iter().map(|r| r.end_demand.iter().sum()).collect();
    let regions = results[0].end_demand.len();
    let per_region = (0..regions)
        .map(|i| Estimate::of(&results.iter().map(|r| r.end_demand[i]).collect::<Vec<_>>()))
        .collect();
    Ok(HorizonMetrics {
        replications: results.len(),
        avg_daily_services: Estimate::of(&services),
        end_demand: Estimate::of(&end),
        end_demand_per_region: per_region,
    })
}

/// `(policy - baseline) / baseline`.
pub fn relative_improvement(policy: f64, baseline: f64) -> f64 {
    (policy - baseline) / baseline
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub services: f64,
    pub end_demand: f64,
}

/// Improvement of `policy` over `baseline` in mean daily services and mean
/// end-of-horizon demand.
pub fn improvement_over(policy: &[HorizonResult], baseline: &[HorizonResult]) -> Result<Improvement> {
    if policy.len() != baseline.len() {
        return Err(Error::config(format!(
            "replication count mismatch: policy {} vs baseline {}",
            policy.len(),
            baseline.len()
        )));
    }
    let p = summarize(policy)?;
    let b = summarize(baseline)?;
    Ok(Improvement {
        services: relative_improvement(p.avg_daily_services.mean, b.avg_daily_services.mean),
        end_demand: relative_improvement(p.end_demand.mean, b.end_demand.mean),
    })
}
