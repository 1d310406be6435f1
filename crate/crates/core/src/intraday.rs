//! The within-day decision process.
//!
//! Each request is a decision point. The fleet's plans are advanced to the
//! request time, cheapest insertion is evaluated on every vehicle, and the
//! policy picks "reject" or one of the feasible vehicles.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Customer, DayScenario, Geography, Minutes, ServiceParams};
use crate::routing::{
    advance_in_place, apply_insertion, cheapest_insertion, Delivery, InsertionResult, VehiclePlan,
    TIME_EPS,
};

/// Reduced decision: `0` rejects, `p` in `1..=P` assigns to vehicle `p - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Decision(pub usize);

impl Decision {
    pub const REJECT: Decision = Decision(0);

    pub fn vehicle(vehicle_id: usize) -> Decision {
        Decision(vehicle_id + 1)
    }

    pub fn is_accept(self) -> bool {
        self.0 != 0
    }

    pub fn vehicle_index(self) -> Option<usize> {
        self.0.checked_sub(1)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IntraDayState<'a> {
    pub now: Minutes,
    pub pending_customer: &'a Customer,
    pub plans: &'a [VehiclePlan],
    pub region_expected: &'a [f64],
    pub region_requested_today: &'a [u64],
    pub region_accepted_today: &'a [u64],
}

/// What a policy sees at a decision point.
#[derive(Clone, Copy, Debug)]
pub struct DecisionPoint<'a> {
    pub state: IntraDayState<'a>,
    /// Cheapest insertion of the pending customer, one entry per vehicle.
    pub insertions: &'a [InsertionResult],
}

impl DecisionPoint<'_> {
    pub fn num_decisions(&self) -> usize {
        self.insertions.len() + 1
    }

    pub fn is_feasible(&self, d: Decision) -> bool {
        match d.vehicle_index() {
            None => true,
            Some(v) => self.insertions.get(v).is_some_and(|r| r.feasible),
        }
    }

    /// Feasible decisions in ascending order; reject is always first.
    pub fn feasible(&self) -> Vec<Decision> {
        std::iter::once(Decision::REJECT)
            .chain(
                self.insertions
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.feasible)
                    .map(|(v, _)| Decision::vehicle(v)),
            )
            .collect()
    }

    pub fn feasibility_mask(&self) -> Vec<bool> {
        std::iter::once(true)
            .chain(self.insertions.iter().map(|r| r.feasible))
            .collect()
    }

    pub fn region(&self) -> usize {
        self.state.pending_customer.region_id
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub time: Minutes,
    pub customer_id: usize,
    pub region_id: usize,
    pub choice: usize,
    /// Insertion delta of the chosen vehicle; zero for rejections.
    pub delta: Minutes,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DayResult {
    pub requested: Vec<u64>,
    pub accepted: Vec<u64>,
    pub accepted_customers: Vec<Customer>,
    pub deliveries: Vec<Delivery>,
    pub decisions: Vec<DecisionRecord>,
    pub final_returns: Vec<Minutes>,
    pub total_services: u64,
}

/// Fraction of requests accepted per region over a window.
///
/// Regions without requests get `empty_level`.
pub fn service_level_with(requested: &[u64], accepted: &[u64], empty_level: f64) -> Vec<f64> {
    requested
        .iter()
        .zip(accepted)
        .map(|(&req, &acc)| {
            if req == 0 {
                empty_level
            } else {
                acc as f64 / req as f64
            }
        })
        .collect()
}

/// [`service_level_with`] with empty windows counted as fully served.
pub fn service_level(requested: &[u64], accepted: &[u64]) -> Vec<f64> {
    service_level_with(requested, accepted, 1.0)
}

/// Fixed min-max bounds for the learning features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub request_window: Minutes,
    pub shift_end: Minutes,
    pub max_proxy: Minutes,
    pub demand_norm: f64,
    pub empty_service_level: f64,
    pub num_regions: usize,
    pub num_vehicles: usize,
}

impl FeatureScaler {
    /// Bounds derived from the geography: proxy distance by the 99.9% bounding
    /// box, expected demand by twice the largest initial demand.
    pub fn new(geo: &Geography, params: &ServiceParams) -> Self {
        let max_initial = geo
            .regions
            .iter()
            .map(|r| r.initial_expected_demand)
            .fold(0.0, f64::max);
        FeatureScaler {
            request_window: params.request_window,
            shift_end: params.shift_end,
            max_proxy: geo.max_proxy_time(),
            demand_norm: (2.0 * max_initial).max(f64::MIN_POSITIVE),
            empty_service_level: 1.0,
            num_regions: geo.num_regions(),
            num_vehicles: params.vehicles,
        }
    }

    pub fn len(&self) -> usize {
        feature_len(self.num_regions, self.num_vehicles)
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn feature_len(num_regions: usize, num_vehicles: usize) -> usize {
    2 + 3 * num_regions + 3 * num_vehicles
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

fn unit(x: f64) -> f64 {
    if x.is_nan() {
        1.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Normalized state features in `[0, 1]`, in this order: decision time,
/// region one-hot, warehouse proxy distance, per-vehicle return time,
/// per-vehicle feasibility, per-vehicle insertion delta (1 when infeasible),
/// per-region expected demand, per-region service level so far today.
pub fn extract_features(point: &DecisionPoint<'_>, geo: &Geography, scaler: &FeatureScaler) -> FeatureVector {
    let s = &point.state;
    let mut f = Vec::with_capacity(scaler.len());
    f.push(unit(s.now / scaler.request_window));
    for i in 0..scaler.num_regions {
        f.push(if s.pending_customer.region_id == i { 1.0 } else { 0.0 });
    }
    let proxy = geo.travel_time(geo.warehouse, s.pending_customer.location);
    f.push(unit(proxy / scaler.max_proxy));
    for plan in s.plans {
        f.push(unit(plan.final_return().max(s.now) / scaler.shift_end));
    }
    for r in point.insertions {
        f.push(if r.feasible { 1.0 } else { 0.0 });
    }
    for r in point.insertions {
        f.push(if r.feasible {
            unit(r.delta_time / (2.0 * scaler.max_proxy))
        } else {
            1.0
        });
    }
    for &d in s.region_expected {
        f.push(unit(d / scaler.demand_norm));
    }
    let levels = service_level_with(
        s.region_requested_today,
        s.region_accepted_today,
        scaler.empty_service_level,
    );
    f.extend(levels.into_iter().map(unit));
    FeatureVector(f)
}

/// Simulates one day, calling `decide` at every decision point.
pub fn run_day_with<F>(
    geo: &Geography,
    params: &ServiceParams,
    scenario: &DayScenario,
    region_expected: &[f64],
    mut decide: F,
) -> Result<DayResult>
where
    F: FnMut(&DecisionPoint<'_>) -> Decision,
{
    let regions = geo.num_regions();
    let mut plans: Vec<VehiclePlan> = (0..params.vehicles).map(VehiclePlan::new).collect();
    let mut requested = vec![0u64; regions];
    let mut accepted = vec![0u64; regions];
    let mut result = DayResult {
        requested: Vec::new(),
        accepted: Vec::new(),
        ..DayResult::default()
    };
    let mut insertions = Vec::with_capacity(params.vehicles);

    for c in &scenario.customers {
        let now = c.request_time;
        for plan in &mut plans {
            advance_in_place(plan, now, geo, params);
        }
        insertions.clear();
        insertions.extend(plans.iter().map(|p| cheapest_insertion(p, c, now, geo, params)));
        let point = DecisionPoint {
            state: IntraDayState {
                now,
                pending_customer: c,
                plans: &plans,
                region_expected,
                region_requested_today: &requested,
                region_accepted_today: &accepted,
            },
            insertions: &insertions,
        };
        let choice = decide(&point);
        if !point.is_feasible(choice) {
            return Err(Error::Simulation(format!(
                "policy chose infeasible decision {} for customer {} at t={now:.3}",
                choice.0, c.id
            )));
        }
        requested[c.region_id] += 1;
        let mut delta = 0.0;
        if let Some(v) = choice.vehicle_index() {
            let ins = insertions[v];
            plans[v] = apply_insertion(&plans[v], c, &ins, geo, params);
            accepted[c.region_id] += 1;
            delta = ins.delta_time;
            result.accepted_customers.push(c.clone());
        }
        result.decisions.push(DecisionRecord {
            time: now,
            customer_id: c.id,
            region_id: c.region_id,
            choice: choice.0,
            delta,
        });
    }

    for plan in &mut plans {
        advance_in_place(plan, params.shift_end, geo, params);
        if plan.current_trip.is_some() || !plan.pending_trips.is_empty() {
            return Err(Error::Simulation(format!(
                "vehicle {} still has work at the end of the shift",
                plan.vehicle_id
            )));
        }
    }
    let mut deliveries: Vec<Delivery> = plans.iter().flat_map(|p| p.delivered.clone()).collect();
    deliveries.sort_by_key(|d| d.customer_id);
    if deliveries.len() != result.accepted_customers.len() {
        return Err(Error::Simulation(format!(
            "{} accepted but {} delivered",
            result.accepted_customers.len(),
            deliveries.len()
        )));
    }
    for (d, c) in deliveries.iter().zip(&result.accepted_customers) {
        if d.customer_id != c.id || d.time > c.deadline + TIME_EPS {
            return Err(Error::Simulation(format!(
                "customer {} not delivered by its deadline",
                c.id
            )));
        }
    }
    result.final_returns = plans.iter().map(|p| p.available_at).collect();
    result.total_services = accepted.iter().sum();
    result.requested = requested;
    result.accepted = accepted;
    result.deliveries = deliveries;
    Ok(result)
}

/// Simulates one day under `policy`.
pub fn run_day<P: crate::policies::Policy + ?Sized>(
    geo: &Geography,
    params: &ServiceParams,
    scenario: &DayScenario,
    policy: &P,
    region_expected: &[f64],
) -> Result<DayResult> {
    run_day_with(geo, params, scenario, region_expected, |point| {
        policy.decide(point, geo)
    })
}

/// Writes the decision log as CSV: `time,customer,region,choice,delta`.
pub fn write_decision_log<W: Write>(out: W, day: &DayResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "customer", "region", "choice", "delta"])?;
    for d in &day.decisions {
        w.write_record([
            d.time.to_string(),
            d.customer_id.to_string(),
            d.region_id.to_string(),
            d.choice.to_string(),
            d.delta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{builtin_geography, GeographyId, Point};
    use crate::policies::MyopicPolicy;

    #[test]
    fn service_level_edges() {
        assert_eq!(service_level(&[5, 3], &[5, 0]), vec![1.0, 0.0]);
        assert_eq!(service_level(&[0], &[0]), vec![1.0]);
        assert_eq!(service_level_with(&[0], &[0], 0.0), vec![0.0]);
        assert_eq!(service_level(&[4], &[1]), vec![0.25]);
    }

    #[test]
    fn empty_day() {
        let geo = builtin_geography(GeographyId::A);
        let params = ServiceParams::default();
        let day = run_day(&geo, &params, &DayScenario::empty(2), &MyopicPolicy, &[1.0, 1.0]).unwrap();
        assert_eq!(day.total_services, 0);
        assert_eq!(day.requested, vec![0, 0]);
        assert_eq!(day.accepted, vec![0, 0]);
    }

    #[test]
    fn single_customer_served() {
        let geo = builtin_geography(GeographyId::A);
        let params = ServiceParams::default();
        let scenario = DayScenario {
            customers: vec![Customer {
                id: 0,
                region_id: 1,
                location: Point::new(10.0, 5.0),
                request_time: 30.0,
                deadline: 30.0 + params.deadline_offset,
            }],
            expected_demands: vec![0.0, 1.0],
        };
        let day = run_day(&geo, &params, &scenario, &MyopicPolicy, &[0.0, 1.0]).unwrap();
        assert_eq!(day.total_services, 1);
        assert_eq!(day.accepted, vec![0, 1]);
        assert_eq!(day.deliveries.len(), 1);
    }

    #[test]
    fn infeasible_choice_is_a_fault() {
        let geo = builtin_geography(GeographyId::A);
        let params = ServiceParams {
            deadline_offset: 1.0,
            ..ServiceParams::default()
        };
        let scenario = DayScenario {
            customers: vec![Customer {
                id: 0,
                region_id: 0,
                location: Point::new(0.0, 0.0),
                request_time: 0.0,
                deadline: 1.0,
            }],
            expected_demands: vec![1.0, 0.0],
        };
        let err = run_day_with(&geo, &params, &scenario, &[1.0, 0.0], |_| Decision(1)).unwrap_err();
        assert!(matches!(err, Error::Simulation(_)));
    }

    #[test]
    fn features_at_start_of_day() {
        let geo = builtin_geography(GeographyId::A);
        let params = ServiceParams::default();
        let scaler = FeatureScaler::new(&geo, &params);
        let c = Customer {
            id: 0,
            region_id: 0,
            location: Point::new(5.0, 5.0),
            request_time: 0.0,
            deadline: 240.0,
        };
        let plans = vec![VehiclePlan::new(0), VehiclePlan::new(1)];
        let ins = vec![
            cheapest_insertion(&plans[0], &c, 0.0, &geo, &params),
            InsertionResult::INFEASIBLE,
        ];
        let point = DecisionPoint {
            state: IntraDayState {
                now: 0.0,
                pending_customer: &c,
                plans: &plans,
                region_expected: &[200.0, 50.0],
                region_requested_today: &[0, 0],
                region_accepted_today: &[0, 0],
            },
            insertions: &ins,
        };
        let f = extract_features(&point, &geo, &FeatureScaler { num_vehicles: 2, ..scaler });
        assert_eq!(f.0.len(), feature_len(2, 2));
        assert_eq!(f.0[0], 0.0);
        // feasibility flags then deltas for the two vehicles
        assert_eq!(&f.0[6..8], &[1.0, 0.0]);
        assert_eq!(f.0[9], 1.0);
        assert!(f.0.iter().all(|x| (0.0..=1.0).contains(x)));
    }
}
