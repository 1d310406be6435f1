//! Training-scenario distributions for the information-shaped policies.
//!
//! Instead of training on one fixed expected demand per region, each training
//! day draws its expected demands from a truncated normal law per region. The
//! equal law centres every region on the average initial demand; the priority
//! law gives prioritized regions four times the mean of the others.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Geography, SpatialLaw};

pub const EQUAL_COV: f64 = 0.5;
pub const PRIORITY_COV: f64 = 0.25;
pub const NON_PRIORITY_COV: f64 = 0.5;
/// Priority-region mean over non-priority-region mean.
pub const PRIORITY_RATIO: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapedDemandLaw {
    pub means: Vec<f64>,
    pub covs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityAssignment {
    pub flags: Vec<bool>,
}

impl PriorityAssignment {
    pub fn from_regions(num_regions: usize, priority: &[usize]) -> Result<Self> {
        let mut flags = vec![false; num_regions];
        for &r in priority {
            *flags.get_mut(r).ok_or_else(|| {
                Error::config(format!("shaping.priority: region {r} out of range"))
            })? = true;
        }
        Ok(PriorityAssignment { flags })
    }

    /// Regions whose initial demand exceeds the average; if all regions start
    /// equal, the region(s) nearest the warehouse instead.
    pub fn default_for(geo: &Geography) -> Self {
        let demands = geo.initial_demands();
        let avg = demands.iter().sum::<f64>() / demands.len() as f64;
        let flags: Vec<bool> = demands.iter().map(|&d| d > avg + 1e-12).collect();
        if flags.iter().any(|&f| f) {
            return PriorityAssignment { flags };
        }
        let dist: Vec<f64> = geo
            .regions
            .iter()
            .map(|r| {
                let centre = match r.spatial_law {
                    SpatialLaw::Normal { mean_km, .. } => mean_km,
                    SpatialLaw::Uniform { lo_km, hi_km } => 0.5 * (lo_km + hi_km),
                };
                geo.warehouse.euclidean_km(crate::instance::Point::new(
                    centre + r.x_shift_km,
                    centre + r.y_shift_km,
                ))
            })
            .collect();
        let nearest = dist.iter().copied().fold(f64::INFINITY, f64::min);
        PriorityAssignment {
            flags: dist.iter().map(|&d| d <= nearest + 1e-9).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Every region centred on the average initial demand.
pub fn shape_equal(geo: &Geography) -> ShapedDemandLaw {
    let n = geo.num_regions();
    let mean = geo.initial_demands().iter().sum::<f64>() / n as f64;
    ShapedDemandLaw {
        means: vec![mean; n],
        covs: vec![EQUAL_COV; n],
    }
}

/// Total initial demand redistributed so each priority region's mean is four
/// times each non-priority region's mean.
pub fn shape_priority(geo: &Geography, priorities: &PriorityAssignment) -> Result<ShapedDemandLaw> {
    if priorities.flags.len() != geo.num_regions() {
        return Err(Error::config(format!(
            "shaping.priority: {} flags for {} regions",
            priorities.flags.len(),
            geo.num_regions()
        )));
    }
    let n_p = priorities.count();
    let n_np = priorities.flags.len() - n_p;
    if n_p == 0 || n_np == 0 {
        return Err(Error::config(
            "shaping.priority: need at least one priority and one non-priority region",
        ));
    }
    let total: f64 = geo.initial_demands().iter().sum();
    let base = total / (PRIORITY_RATIO * n_p as f64 + n_np as f64);
    let (means, covs) = priorities
        .flags
        .iter()
        .map(|&p| {
            if p {
                (PRIORITY_RATIO * base, PRIORITY_COV)
            } else {
                (base, NON_PRIORITY_COV)
            }
        })
        .unzip();
    Ok(ShapedDemandLaw { means, covs })
}

impl ShapedDemandLaw {
    pub fn validate(&self) -> Result<()> {
        if self.means.len() != self.covs.len() {
            return Err(Error::config("shaping: means and covs differ in length"));
        }
        if self.covs.iter().any(|&c| !(c > 0.0)) || self.means.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::config("shaping: COV must be > 0 and means >= 0"));
        }
        Ok(())
    }
}

/// One truncated-normal draw per region, re-drawn until nonnegative.
pub fn sample_training_demands<R: Rng + ?Sized>(law: &ShapedDemandLaw, rng: &mut R) -> Vec<f64> {
    law.means
        .iter()
        .zip(&law.covs)
        .map(|(&mean, &cov)| {
            if mean <= 0.0 {
                return 0.0;
            }
            let normal = Normal::new(mean, cov * mean).expect("positive sd");
            loop {
                let x = normal.sample(rng);
                if x >= 0.0 {
                    break x;
                }
            }
        })
        .collect()
}
